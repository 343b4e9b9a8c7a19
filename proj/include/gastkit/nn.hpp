#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <unordered_set>
#include <vector>

#include "gastkit/conv.hpp"

namespace gastkit {

template <typename Real>
struct NamedTensor {
  std::string name;
  Tensor<Real> tensor;
};

/// Owns the named trainable parameters and non-trainable buffers of a model.
/// Registration order is the canonical order for checkpoints and optimizers.
template <typename Real>
class ParameterStore {
 public:
  Tensor<Real> add_parameter(const std::string& name, Tensor<Real> t) {
    claim(name);
    t.set_requires_grad(true);
    params_.push_back({name, t});
    return t;
  }

  Tensor<Real> add_buffer(const std::string& name, Tensor<Real> t) {
    claim(name);
    t.set_requires_grad(false);
    buffers_.push_back({name, t});
    return t;
  }

  const std::vector<NamedTensor<Real>>& parameters() const { return params_; }
  const std::vector<NamedTensor<Real>>& buffers() const { return buffers_; }

  std::vector<NamedTensor<Real>> all() const {
    auto out = params_;
    out.insert(out.end(), buffers_.begin(), buffers_.end());
    return out;
  }

  void zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
  }

  std::int64_t parameter_count() const {
    std::int64_t n = 0;
    for (const auto& p : params_) n += p.tensor.numel();
    return n;
  }

 private:
  void claim(const std::string& name) {
    if (!names_.insert(name).second) throw ContractError("duplicate parameter name '" + name + "'");
  }

  std::vector<NamedTensor<Real>> params_;
  std::vector<NamedTensor<Real>> buffers_;
  std::unordered_set<std::string> names_;
};

namespace detail {
template <typename Real>
Tensor<Real> he_normal(Shape shape, std::int64_t fan_in, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  std::vector<Real> v(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& x : v) x = static_cast<Real>(dist(rng));
  return Tensor<Real>::from_data(std::move(shape), std::move(v));
}
}  // namespace detail

template <typename Real>
struct Conv3d {
  Tensor<Real> weight, bias;
  Triple stride{1, 1, 1}, padding{0, 0, 0};

  static Conv3d create(ParameterStore<Real>& store, const std::string& name, std::int64_t cin, std::int64_t cout,
                       Triple kernel, Triple stride, Triple padding, std::mt19937_64& rng) {
    Conv3d c;
    const std::int64_t fan_in = cin * kernel[0] * kernel[1] * kernel[2];
    c.weight = store.add_parameter(name + ".weight",
                                   detail::he_normal<Real>({cout, cin, kernel[0], kernel[1], kernel[2]}, fan_in, rng));
    c.bias = store.add_parameter(name + ".bias", Tensor<Real>::zeros({cout}));
    c.stride = stride;
    c.padding = padding;
    return c;
  }

  Tensor<Real> operator()(const Tensor<Real>& x) const { return conv3d(x, weight, bias, stride, padding); }
};

template <typename Real>
struct Conv2d {
  Tensor<Real> weight, bias;
  int stride = 1, padding = 0;

  static Conv2d create(ParameterStore<Real>& store, const std::string& name, std::int64_t cin, std::int64_t cout,
                       int kernel, std::mt19937_64& rng) {
    Conv2d c;
    c.weight = store.add_parameter(name + ".weight",
                                   detail::he_normal<Real>({cout, cin, kernel, kernel}, cin * kernel * kernel, rng));
    c.bias = store.add_parameter(name + ".bias", Tensor<Real>::zeros({cout}));
    c.padding = kernel / 2;
    return c;
  }

  Tensor<Real> operator()(const Tensor<Real>& x) const { return conv2d(x, weight, bias, stride, padding); }
};

template <typename Real>
struct BatchNorm {
  Tensor<Real> gamma, beta, running_mean, running_var;
  double momentum = 0.1;
  double eps = 1e-5;

  static BatchNorm create(ParameterStore<Real>& store, const std::string& name, std::int64_t channels) {
    BatchNorm bn;
    bn.gamma = store.add_parameter(name + ".gamma", Tensor<Real>::full({channels}, Real(1)));
    bn.beta = store.add_parameter(name + ".beta", Tensor<Real>::zeros({channels}));
    bn.running_mean = store.add_buffer(name + ".running_mean", Tensor<Real>::zeros({channels}));
    bn.running_var = store.add_buffer(name + ".running_var", Tensor<Real>::full({channels}, Real(1)));
    return bn;
  }

  Tensor<Real> operator()(const Tensor<Real>& x, bool training) {
    return batchnorm(x, gamma, beta, &running_mean, &running_var, BatchNormOptions{training, momentum, eps});
  }
};

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. Moments start at zero; missing gradients count as zero.
template <typename Real>
class Adam {
 public:
  Adam(std::vector<NamedTensor<Real>> params, AdamOptions options)
      : params_(std::move(params)), options_(options) {
    for (const auto& p : params_) {
      m_.emplace_back(static_cast<std::size_t>(p.tensor.numel()), Real(0));
      v_.emplace_back(static_cast<std::size_t>(p.tensor.numel()), Real(0));
    }
  }

  // Throws NonFiniteError (naming the parameter) before touching any state if a gradient is NaN/Inf.
  void step() {
    for (const auto& p : params_) {
      if (!p.tensor.has_grad()) continue;
      for (Real g : p.tensor.grad()) {
        if (!std::isfinite(static_cast<double>(g))) {
          throw NonFiniteError("non-finite gradient in parameter '" + p.name + "'");
        }
      }
    }
    ++step_;
    const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(step_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto w = params_[i].tensor.mutable_data();
      const bool has = params_[i].tensor.has_grad();
      const auto g = params_[i].tensor.grad();
      auto& m = m_[i];
      auto& v = v_[i];
      for (std::size_t j = 0; j < w.size(); ++j) {
        const double gj = has ? static_cast<double>(g[j]) : 0.0;
        m[j] = static_cast<Real>(options_.beta1 * m[j] + (1.0 - options_.beta1) * gj);
        v[j] = static_cast<Real>(options_.beta2 * v[j] + (1.0 - options_.beta2) * gj * gj);
        const double mhat = m[j] / bc1;
        const double vhat = v[j] / bc2;
        w[j] = static_cast<Real>(w[j] - options_.lr * mhat / (std::sqrt(vhat) + options_.eps));
      }
    }
  }

  std::int64_t step_count() const { return step_; }
  const AdamOptions& options() const { return options_; }
  void set_lr(double lr) { options_.lr = lr; }

  // Moment buffers in parameter order, for persisting optimizer state.
  std::vector<std::vector<Real>>& first_moments() { return m_; }
  std::vector<std::vector<Real>>& second_moments() { return v_; }
  void set_step_count(std::int64_t s) { step_ = s; }
  const std::vector<NamedTensor<Real>>& parameters() const { return params_; }

 private:
  std::vector<NamedTensor<Real>> params_;
  AdamOptions options_;
  std::vector<std::vector<Real>> m_, v_;
  std::int64_t step_ = 0;
};

}  // namespace gastkit
