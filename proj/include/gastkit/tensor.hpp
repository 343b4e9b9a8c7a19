#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "gastkit/errors.hpp"

namespace gastkit {

using Shape = std::vector<std::int64_t>;

inline std::int64_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::int64_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

namespace detail {

inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

// Records the discrete decisions (ReLU signs, pool argmaxes) taken during a forward
// pass. Gradient checks compare signatures across perturbed evaluations to detect
// finite-difference steps that straddle a non-differentiable point.
struct KinkProbe {
  std::uint64_t signature = 1469598103934665603ULL;
  void mix(std::uint64_t v) {
    signature ^= v + 0x9e3779b97f4a7c15ULL + (signature << 6) + (signature >> 2);
  }
};

inline KinkProbe*& kink_probe() {
  thread_local KinkProbe* probe = nullptr;
  return probe;
}

template <typename Real>
struct Node {
  Shape shape;
  std::vector<Real> data;
  std::vector<Real> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(std::span<const Real>)> backward;

  std::span<Real> grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), Real(0));
    return grad;
  }
};

}  // namespace detail

inline bool grad_enabled() { return detail::grad_mode(); }

// Disables graph recording on the current thread (inference, oracles).
class NoGradGuard {
 public:
  NoGradGuard() : previous_(std::exchange(detail::grad_mode(), false)) {}
  ~NoGradGuard() { detail::grad_mode() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

class ScopedKinkProbe {
 public:
  explicit ScopedKinkProbe(detail::KinkProbe& probe)
      : previous_(std::exchange(detail::kink_probe(), &probe)) {}
  ~ScopedKinkProbe() { detail::kink_probe() = previous_; }
  ScopedKinkProbe(const ScopedKinkProbe&) = delete;
  ScopedKinkProbe& operator=(const ScopedKinkProbe&) = delete;

 private:
  detail::KinkProbe* previous_;
};

/// Shaped row-major array with optional reverse-mode gradient tracking.
///
/// A Tensor is a cheap handle: copies share the underlying storage. Values are
/// treated as immutable once the tensor has been used as an op input; only leaf
/// tensors (parameters, buffers) are written in place, and only between graphs.
template <typename Real>
class Tensor {
 public:
  using value_type = Real;
  using Node = detail::Node<Real>;
  using BackwardFn = std::function<void(std::span<const Real>)>;

  Tensor() = default;

  static Tensor from_data(Shape shape, std::vector<Real> data, bool requires_grad = false) {
    for (std::size_t i = 0; i < shape.size(); ++i) {
      if (shape[i] <= 0) {
        throw DimensionError("tensor extent on axis " + std::to_string(i) + " must be positive, got " +
                             shape_str(shape));
      }
    }
    if (shape_numel(shape) != static_cast<std::int64_t>(data.size())) {
      throw DimensionError("tensor shape " + shape_str(shape) + " does not match " +
                           std::to_string(data.size()) + " values");
    }
    Tensor t;
    t.node_ = std::make_shared<Node>();
    t.node_->shape = std::move(shape);
    t.node_->data = std::move(data);
    t.node_->requires_grad = requires_grad;
    return t;
  }

  static Tensor full(Shape shape, Real value, bool requires_grad = false) {
    auto n = static_cast<std::size_t>(shape_numel(shape));
    return from_data(std::move(shape), std::vector<Real>(n, value), requires_grad);
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return full(std::move(shape), Real(0), requires_grad);
  }

  static Tensor scalar(Real value, bool requires_grad = false) {
    return from_data({}, {value}, requires_grad);
  }

  // Builds an op output. The graph edge is recorded only when grad mode is on and
  // some input requires grad; `backward` receives dLoss/dOutput.
  static Tensor make_result(Shape shape, std::vector<Real> data, std::vector<Tensor> inputs,
                            BackwardFn backward) {
    Tensor out = from_data(std::move(shape), std::move(data));
    if (!grad_enabled()) return out;
    bool any = false;
    for (const auto& in : inputs) any = any || in.requires_grad();
    if (!any) return out;
    out.node_->requires_grad = true;
    for (auto& in : inputs) {
      if (in.requires_grad()) out.node_->parents.push_back(in.node_);
    }
    out.node_->backward = std::move(backward);
    return out;
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return checked().shape; }
  int rank() const { return static_cast<int>(shape().size()); }
  std::int64_t numel() const { return static_cast<std::int64_t>(checked().data.size()); }

  std::int64_t dim(int axis) const {
    const int r = rank();
    const int a = axis < 0 ? axis + r : axis;
    if (a < 0 || a >= r) {
      throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(shape()));
    }
    return shape()[a];
  }

  std::span<const Real> data() const { return checked().data; }
  // In-place access for leaves (parameter updates, buffers, test perturbation).
  std::span<Real> mutable_data() { return checked().data; }

  bool has_grad() const { return !checked().grad.empty(); }
  std::span<const Real> grad() const { return checked().grad; }
  // Accumulation target for op backward functions; allocated zeroed on first use.
  std::span<Real> grad_buffer() const { return node_->grad_buffer(); }

  bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool on) { checked().requires_grad = on; }
  void zero_grad() { checked().grad.clear(); }

  Real item() const {
    if (numel() != 1) throw ContractError("item() on non-scalar tensor of shape " + shape_str(shape()));
    return data()[0];
  }

  Tensor detach() const {
    return from_data(shape(), std::vector<Real>(data().begin(), data().end()));
  }

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  Node& checked() const {
    if (!node_) throw ContractError("use of an undefined tensor");
    return *node_;
  }

  std::shared_ptr<Node> node_;
};

/// Reverse-mode sweep from a scalar loss. Gradients accumulate (+=) into every
/// participating tensor that requires grad; recorded closures are released
/// afterwards, so a graph can be differentiated once.
template <typename Real>
void backward(const Tensor<Real>& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward: loss must be a scalar tensor, got shape " +
                        (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
  }
  if (!loss.requires_grad()) {
    throw ContractError("backward: loss is not connected to any tensor that requires grad");
  }
  using Node = detail::Node<Real>;
  std::vector<std::shared_ptr<Node>> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<std::shared_ptr<Node>, std::size_t>> stack;
  stack.emplace_back(loss.node(), 0);
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& top = stack.back();
    if (top.second < top.first->parents.size()) {
      std::shared_ptr<Node> parent = top.first->parents[top.second++];
      if (visited.insert(parent.get()).second) stack.emplace_back(std::move(parent), 0);
    } else {
      order.push_back(std::move(top.first));
      stack.pop_back();
    }
  }
  loss.node()->grad_buffer()[0] += Real(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = it->get();
    if (!node->backward) continue;
    if (!node->grad.empty()) node->backward(node->grad);
    node->backward = nullptr;
    node->parents.clear();
  }
}

}  // namespace gastkit
