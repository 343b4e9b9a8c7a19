#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "gastkit/tensor.hpp"

namespace gastkit::testing {

// |analytic - numeric| / max(|analytic|, |numeric|, 1e-5).
inline double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-5});
  return std::abs(analytic - numeric) / denom;
}

struct GradCheckReport {
  double max_rel_error = 0;
  int checked = 0;
  int skipped = 0;
  std::string worst;

  void merge(const GradCheckReport& o) {
    if (o.max_rel_error > max_rel_error) {
      max_rel_error = o.max_rel_error;
      worst = o.worst;
    }
    checked += o.checked;
    skipped += o.skipped;
  }
};

using NamedInput = std::pair<std::string, Tensor<double>>;

/// Compares backward() against central finite differences of a scalar function.
///
/// `f` rebuilds the graph from the current values of `inputs` on every call.
/// Up to `per_input` coordinates are probed per input tensor. A coordinate is
/// skipped when the discrete decisions of the forward pass (ReLU signs, pooling
/// winners) differ between the perturbed and unperturbed evaluations, since the
/// function is not differentiable across such a step.
inline GradCheckReport check_gradients(const std::function<Tensor<double>()>& f, std::vector<NamedInput> inputs,
                                       std::mt19937_64& rng, int per_input = 8, double h = 1e-4) {
  for (auto& [name, t] : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  {
    auto loss = f();
    backward(loss);
  }
  auto evaluate = [&](std::uint64_t& signature) {
    NoGradGuard no_grad;
    detail::KinkProbe probe;
    ScopedKinkProbe scope(probe);
    const double v = f().item();
    signature = probe.signature;
    return v;
  };
  std::uint64_t base_sig = 0;
  evaluate(base_sig);

  GradCheckReport report;
  for (auto& [name, t] : inputs) {
    const auto n = static_cast<std::size_t>(t.numel());
    std::vector<std::size_t> coords(n);
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    std::shuffle(coords.begin(), coords.end(), rng);
    const std::vector<double> analytic = t.has_grad() ? std::vector<double>(t.grad().begin(), t.grad().end())
                                                      : std::vector<double>(n, 0.0);
    int probed = 0;
    for (std::size_t i : coords) {
      if (probed >= per_input) break;
      auto x = t.mutable_data();
      const double orig = x[i];
      std::uint64_t sp = 0, sm = 0;
      x[i] = orig + h;
      const double fp = evaluate(sp);
      x[i] = orig - h;
      const double fm = evaluate(sm);
      x[i] = orig;
      if (sp != base_sig || sm != base_sig) {
        ++report.skipped;
        continue;
      }
      ++probed;
      const double numeric = (fp - fm) / (2 * h);
      const double err = relative_error(analytic[i], numeric);
      ++report.checked;
      if (err >= report.max_rel_error) {
        report.max_rel_error = err;
        std::ostringstream os;
        os << name << "[" << i << "] analytic " << analytic[i] << " numeric " << numeric;
        report.worst = os.str();
      }
    }
  }
  return report;
}

inline Tensor<double> random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& x : v) x = dist(rng);
  return Tensor<double>::from_data(std::move(shape), std::move(v));
}

// Scalar readout sum(w * y) with fixed random w, so every output element
// carries a distinct weight in the checked gradient.
inline Tensor<double> weighted_sum(const Tensor<double>& y, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto w = random_tensor(y.shape(), rng);
  return sum(mul(y, w));
}

}  // namespace gastkit::testing
