#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "gastkit/tensor.hpp"

namespace gastkit {

namespace detail {

// Left-to-right sums whose rounding does not depend on buffer alignment.
template <typename Real>
Real ordered_sum(const Real* p, std::int64_t n) {
  double acc = 0;
  for (std::int64_t i = 0; i < n; ++i) acc += static_cast<double>(p[i]);
  return static_cast<Real>(acc);
}

template <typename Real>
Real ordered_dot(const Real* a, const Real* b, std::int64_t n) {
  double acc = 0;
  for (std::int64_t i = 0; i < n; ++i) acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return static_cast<Real>(acc);
}

inline int normalize_axis(int axis, int rank, const char* op) {
  const int a = axis < 0 ? axis + rank : axis;
  if (a < 0 || a >= rank) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for rank " +
                         std::to_string(rank));
  }
  return a;
}

// Splits a shape around `axis` into (outer, extent, inner) for strided loops.
inline void split_at_axis(const Shape& shape, int axis, std::int64_t& outer, std::int64_t& extent,
                          std::int64_t& inner) {
  outer = 1;
  inner = 1;
  for (int i = 0; i < axis; ++i) outer *= shape[i];
  extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
}

template <typename Real, typename Fwd, typename Bwd>
Tensor<Real> unary(const Tensor<Real>& x, Fwd fwd, Bwd dfdx) {
  const auto in = x.data();
  std::vector<Real> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = fwd(in[i]);
  return Tensor<Real>::make_result(x.shape(), std::move(out), {x}, [x, dfdx](std::span<const Real> g) {
    auto gx = x.grad_buffer();
    const auto in = x.data();
    for (std::size_t i = 0; i < in.size(); ++i) gx[i] += g[i] * dfdx(in[i]);
  });
}

struct BroadcastPlan {
  Shape out;
  std::vector<std::int64_t> a_stride, b_stride, out_stride;
  bool same = false;
};

inline BroadcastPlan plan_broadcast(const Shape& a, const Shape& b, const char* op) {
  if (a.size() != b.size()) {
    throw DimensionError(std::string(op) + ": rank mismatch " + shape_str(a) + " vs " + shape_str(b));
  }
  BroadcastPlan p;
  p.same = a == b;
  const std::size_t r = a.size();
  p.out.resize(r);
  for (std::size_t i = 0; i < r; ++i) {
    if (a[i] != b[i] && a[i] != 1 && b[i] != 1) {
      throw DimensionError(std::string(op) + ": axis " + std::to_string(i) + " extents " + std::to_string(a[i]) +
                           " and " + std::to_string(b[i]) + " are not broadcastable");
    }
    p.out[i] = std::max(a[i], b[i]);
  }
  p.a_stride.assign(r, 0);
  p.b_stride.assign(r, 0);
  p.out_stride.assign(r, 0);
  std::int64_t sa = 1, sb = 1, so = 1;
  for (std::size_t k = r; k-- > 0;) {
    p.a_stride[k] = a[k] == 1 ? 0 : sa;
    p.b_stride[k] = b[k] == 1 ? 0 : sb;
    p.out_stride[k] = so;
    sa *= a[k];
    sb *= b[k];
    so *= p.out[k];
  }
  return p;
}

// Calls f(out_index, a_index, b_index) for every output element in row-major order.
template <typename F>
void for_each_broadcast(const BroadcastPlan& p, F&& f) {
  const std::int64_t n = shape_numel(p.out);
  if (p.same) {
    for (std::int64_t i = 0; i < n; ++i) f(i, i, i);
    return;
  }
  const std::size_t r = p.out.size();
  std::vector<std::int64_t> idx(r, 0);
  std::int64_t ia = 0, ib = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    f(i, ia, ib);
    for (std::size_t k = r; k-- > 0;) {
      ++idx[k];
      ia += p.a_stride[k];
      ib += p.b_stride[k];
      if (idx[k] < p.out[k]) break;
      ia -= p.a_stride[k] * idx[k];
      ib -= p.b_stride[k] * idx[k];
      idx[k] = 0;
    }
  }
}

}  // namespace detail

template <typename Real>
Tensor<Real> relu(const Tensor<Real>& x) {
  if (auto* probe = detail::kink_probe()) {
    std::uint64_t h = 0;
    for (Real v : x.data()) h = h * 31 + (v > Real(0) ? 1 : 0);
    probe->mix(h);
  }
  using Arr = Eigen::Array<Real, Eigen::Dynamic, 1>;
  const auto in = x.data();
  const auto n = static_cast<Eigen::Index>(in.size());
  std::vector<Real> out(in.size());
  Eigen::Map<Arr>(out.data(), n) = Eigen::Map<const Arr>(in.data(), n).max(Real(0));
  return Tensor<Real>::make_result(x.shape(), std::move(out), {x}, [x, n](std::span<const Real> g) {
    Eigen::Map<const Arr> xin(x.data().data(), n);
    Eigen::Map<const Arr> gy(g.data(), n);
    Eigen::Map<Arr>(x.grad_buffer().data(), n) += (xin > Real(0)).select(gy, Real(0));
  });
}

template <typename Real>
Tensor<Real> sigmoid(const Tensor<Real>& x) {
  const auto in = x.data();
  std::vector<Real> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = Real(1) / (Real(1) + std::exp(-in[i]));
  auto s = out;
  return Tensor<Real>::make_result(x.shape(), std::move(out), {x}, [x, s = std::move(s)](std::span<const Real> g) {
    auto gx = x.grad_buffer();
    for (std::size_t i = 0; i < s.size(); ++i) gx[i] += g[i] * s[i] * (Real(1) - s[i]);
  });
}

template <typename Real>
Tensor<Real> scale(const Tensor<Real>& x, Real factor) {
  return detail::unary(x, [factor](Real v) { return v * factor; }, [factor](Real) { return factor; });
}

template <typename Real>
Tensor<Real> add_scalar(const Tensor<Real>& x, Real offset) {
  return detail::unary(x, [offset](Real v) { return v + offset; }, [](Real) { return Real(1); });
}

// Element-wise a + b with size-1 broadcasting on equal-rank shapes.
template <typename Real>
Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b) {
  auto plan = detail::plan_broadcast(a.shape(), b.shape(), "add");
  const auto da = a.data(), db = b.data();
  std::vector<Real> out(static_cast<std::size_t>(shape_numel(plan.out)));
  detail::for_each_broadcast(plan, [&](auto i, auto ia, auto ib) { out[i] = da[ia] + db[ib]; });
  auto shape = plan.out;
  return Tensor<Real>::make_result(std::move(shape), std::move(out), {a, b}, [a, b, plan](std::span<const Real> g) {
    if (a.requires_grad()) {
      auto ga = a.grad_buffer();
      detail::for_each_broadcast(plan, [&](auto i, auto ia, auto) { ga[ia] += g[i]; });
    }
    if (b.requires_grad()) {
      auto gb = b.grad_buffer();
      detail::for_each_broadcast(plan, [&](auto i, auto, auto ib) { gb[ib] += g[i]; });
    }
  });
}

template <typename Real>
Tensor<Real> sub(const Tensor<Real>& a, const Tensor<Real>& b) {
  return add(a, scale(b, Real(-1)));
}

// Element-wise a * b with size-1 broadcasting on equal-rank shapes.
template <typename Real>
Tensor<Real> mul(const Tensor<Real>& a, const Tensor<Real>& b) {
  auto plan = detail::plan_broadcast(a.shape(), b.shape(), "mul");
  const auto da = a.data(), db = b.data();
  std::vector<Real> out(static_cast<std::size_t>(shape_numel(plan.out)));
  detail::for_each_broadcast(plan, [&](auto i, auto ia, auto ib) { out[i] = da[ia] * db[ib]; });
  auto shape = plan.out;
  return Tensor<Real>::make_result(std::move(shape), std::move(out), {a, b}, [a, b, plan](std::span<const Real> g) {
    const auto da = a.data(), db = b.data();
    if (a.requires_grad()) {
      auto ga = a.grad_buffer();
      detail::for_each_broadcast(plan, [&](auto i, auto ia, auto ib) { ga[ia] += g[i] * db[ib]; });
    }
    if (b.requires_grad()) {
      auto gb = b.grad_buffer();
      detail::for_each_broadcast(plan, [&](auto i, auto ia, auto ib) { gb[ib] += g[i] * da[ia]; });
    }
  });
}

template <typename Real>
Tensor<Real> sum(const Tensor<Real>& x) {
  using Arr = Eigen::Array<Real, Eigen::Dynamic, 1>;
  const auto n = static_cast<Eigen::Index>(x.numel());
  const Real acc = detail::ordered_sum(x.data().data(), x.numel());
  return Tensor<Real>::make_result({}, {acc}, {x}, [x, n](std::span<const Real> g) {
    Eigen::Map<Arr>(x.grad_buffer().data(), n) += g[0];
  });
}

template <typename Real>
Tensor<Real> mean(const Tensor<Real>& x) {
  return scale(sum(x), Real(1) / static_cast<Real>(x.numel()));
}

// Mean over one axis; the axis is removed from the result shape.
template <typename Real>
Tensor<Real> mean_axis(const Tensor<Real>& x, int axis) {
  const int a = detail::normalize_axis(axis, x.rank(), "mean_axis");
  std::int64_t outer, extent, inner;
  detail::split_at_axis(x.shape(), a, outer, extent, inner);
  Shape shape = x.shape();
  shape.erase(shape.begin() + a);
  const auto in = x.data();
  std::vector<Real> out(static_cast<std::size_t>(outer * inner), Real(0));
  const Real inv = Real(1) / static_cast<Real>(extent);
  for (std::int64_t o = 0; o < outer; ++o)
    for (std::int64_t e = 0; e < extent; ++e)
      for (std::int64_t i = 0; i < inner; ++i) out[o * inner + i] += in[(o * extent + e) * inner + i];
  for (auto& v : out) v *= inv;
  return Tensor<Real>::make_result(std::move(shape), std::move(out), {x},
                                   [x, outer, extent, inner, inv](std::span<const Real> g) {
                                     auto gx = x.grad_buffer();
                                     for (std::int64_t o = 0; o < outer; ++o)
                                       for (std::int64_t e = 0; e < extent; ++e)
                                         for (std::int64_t i = 0; i < inner; ++i)
                                           gx[(o * extent + e) * inner + i] += g[o * inner + i] * inv;
                                   });
}

template <typename Real>
Tensor<Real> reshape(const Tensor<Real>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  std::vector<Real> out(x.data().begin(), x.data().end());
  return Tensor<Real>::make_result(std::move(shape), std::move(out), {x}, [x](std::span<const Real> g) {
    auto gx = x.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

// Contiguous range [start, start+length) along `axis`; rank is preserved.
template <typename Real>
Tensor<Real> slice(const Tensor<Real>& x, int axis, std::int64_t start, std::int64_t length) {
  const int a = detail::normalize_axis(axis, x.rank(), "slice");
  std::int64_t outer, extent, inner;
  detail::split_at_axis(x.shape(), a, outer, extent, inner);
  if (start < 0 || length <= 0 || start + length > extent) {
    throw DimensionError("slice: range [" + std::to_string(start) + "," + std::to_string(start + length) +
                         ") exceeds extent " + std::to_string(extent) + " of axis " + std::to_string(a));
  }
  Shape shape = x.shape();
  shape[a] = length;
  const auto in = x.data();
  std::vector<Real> out(static_cast<std::size_t>(outer * length * inner));
  for (std::int64_t o = 0; o < outer; ++o)
    std::copy_n(in.begin() + (o * extent + start) * inner, length * inner, out.begin() + o * length * inner);
  return Tensor<Real>::make_result(std::move(shape), std::move(out), {x},
                                   [x, outer, extent, inner, start, length](std::span<const Real> g) {
                                     auto gx = x.grad_buffer();
                                     for (std::int64_t o = 0; o < outer; ++o)
                                       for (std::int64_t j = 0; j < length * inner; ++j)
                                         gx[(o * extent + start) * inner + j] += g[o * length * inner + j];
                                   });
}

// Single index along `axis`; the axis is removed.
template <typename Real>
Tensor<Real> select(const Tensor<Real>& x, int axis, std::int64_t index) {
  const int a = detail::normalize_axis(axis, x.rank(), "select");
  Shape shape = x.shape();
  shape.erase(shape.begin() + a);
  return reshape(slice(x, a, index, 1), std::move(shape));
}

template <typename Real>
Tensor<Real> concat(const std::vector<Tensor<Real>>& parts, int axis) {
  if (parts.empty()) throw ContractError("concat: no inputs");
  const int a = detail::normalize_axis(axis, parts.front().rank(), "concat");
  Shape shape = parts.front().shape();
  std::int64_t total = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const Shape& s = parts[p].shape();
    if (s.size() != shape.size()) throw DimensionError("concat: rank mismatch at input " + std::to_string(p));
    for (std::size_t k = 0; k < s.size(); ++k) {
      if (static_cast<int>(k) != a && s[k] != shape[k]) {
        throw DimensionError("concat: input " + std::to_string(p) + " has extent " + std::to_string(s[k]) +
                             " on axis " + std::to_string(k) + ", expected " + std::to_string(shape[k]));
      }
    }
    total += s[a];
  }
  shape[a] = total;
  std::int64_t outer, extent, inner;
  detail::split_at_axis(shape, a, outer, extent, inner);
  std::vector<Real> out(static_cast<std::size_t>(shape_numel(shape)));
  std::int64_t offset = 0;
  std::vector<std::int64_t> offsets;
  for (const auto& part : parts) {
    const std::int64_t len = part.shape()[a];
    const auto in = part.data();
    for (std::int64_t o = 0; o < outer; ++o)
      std::copy_n(in.begin() + o * len * inner, len * inner, out.begin() + (o * extent + offset) * inner);
    offsets.push_back(offset);
    offset += len;
  }
  return Tensor<Real>::make_result(
      std::move(shape), std::move(out), parts, [parts, offsets, a, outer, extent, inner](std::span<const Real> g) {
        for (std::size_t p = 0; p < parts.size(); ++p) {
          if (!parts[p].requires_grad()) continue;
          auto gp = parts[p].grad_buffer();
          const std::int64_t len = parts[p].shape()[a];
          for (std::int64_t o = 0; o < outer; ++o)
            for (std::int64_t j = 0; j < len * inner; ++j)
              gp[o * len * inner + j] += g[(o * extent + offsets[p]) * inner + j];
        }
      });
}

// Numerically stable softmax along `axis`.
template <typename Real>
Tensor<Real> softmax(const Tensor<Real>& x, int axis) {
  const int a = detail::normalize_axis(axis, x.rank(), "softmax");
  std::int64_t outer, extent, inner;
  detail::split_at_axis(x.shape(), a, outer, extent, inner);
  const auto in = x.data();
  std::vector<Real> out(in.size());
  for (std::int64_t o = 0; o < outer; ++o) {
    for (std::int64_t i = 0; i < inner; ++i) {
      const std::int64_t base = o * extent * inner + i;
      Real m = -std::numeric_limits<Real>::infinity();
      for (std::int64_t e = 0; e < extent; ++e) m = std::max(m, in[base + e * inner]);
      Real z = 0;
      for (std::int64_t e = 0; e < extent; ++e) {
        out[base + e * inner] = std::exp(in[base + e * inner] - m);
        z += out[base + e * inner];
      }
      for (std::int64_t e = 0; e < extent; ++e) out[base + e * inner] /= z;
    }
  }
  auto s = out;
  return Tensor<Real>::make_result(x.shape(), std::move(out), {x},
                                   [x, s = std::move(s), outer, extent, inner](std::span<const Real> g) {
                                     auto gx = x.grad_buffer();
                                     for (std::int64_t o = 0; o < outer; ++o) {
                                       for (std::int64_t i = 0; i < inner; ++i) {
                                         const std::int64_t base = o * extent * inner + i;
                                         Real dot = 0;
                                         for (std::int64_t e = 0; e < extent; ++e)
                                           dot += g[base + e * inner] * s[base + e * inner];
                                         for (std::int64_t e = 0; e < extent; ++e)
                                           gx[base + e * inner] += s[base + e * inner] * (g[base + e * inner] - dot);
                                       }
                                     }
                                   });
}

// Reads x at the given flat (row-major) indices; result shape [K].
template <typename Real>
Tensor<Real> gather(const Tensor<Real>& x, std::vector<std::int64_t> flat_indices) {
  if (flat_indices.empty()) throw ContractError("gather: empty index list");
  const auto in = x.data();
  std::vector<Real> out(flat_indices.size());
  for (std::size_t k = 0; k < flat_indices.size(); ++k) {
    if (flat_indices[k] < 0 || flat_indices[k] >= x.numel()) {
      throw DimensionError("gather: index " + std::to_string(flat_indices[k]) + " outside tensor of " +
                           std::to_string(x.numel()) + " elements");
    }
    out[k] = in[flat_indices[k]];
  }
  const auto k = static_cast<std::int64_t>(flat_indices.size());
  return Tensor<Real>::make_result({k}, std::move(out), {x},
                                   [x, idx = std::move(flat_indices)](std::span<const Real> g) {
                                     auto gx = x.grad_buffer();
                                     for (std::size_t j = 0; j < idx.size(); ++j) gx[idx[j]] += g[j];
                                   });
}

struct BatchNormOptions {
  bool training = true;
  double momentum = 0.1;
  double eps = 1e-5;
};

/// Batch normalization over every axis except axis 0 (channels).
///
/// In training mode the batch statistics normalize the input and, when running
/// buffers are given, update them (running_var uses the unbiased estimate). In
/// eval mode the running buffers are used as constants.
template <typename Real>
Tensor<Real> batchnorm(const Tensor<Real>& x, const Tensor<Real>& gamma, const Tensor<Real>& beta,
                       Tensor<Real>* running_mean, Tensor<Real>* running_var, const BatchNormOptions& opt) {
  if (x.rank() < 1) throw DimensionError("batchnorm: input must have a channel axis");
  const std::int64_t c = x.shape()[0];
  if (gamma.numel() != c || beta.numel() != c) {
    throw DimensionError("batchnorm: channel axis 0 has extent " + std::to_string(c) + " but gamma/beta have " +
                         std::to_string(gamma.numel()) + "/" + std::to_string(beta.numel()));
  }
  const std::int64_t m = x.numel() / c;
  const auto in = x.data();
  const auto gm = gamma.data(), bt = beta.data();
  using Arr = Eigen::Array<Real, Eigen::Dynamic, 1>;
  std::vector<Real> mu(c), inv_std(c), xhat(in.size()), out(in.size());
  if (opt.training) {
    for (std::int64_t ch = 0; ch < c; ++ch) {
      const Real* p = in.data() + ch * m;
      double mean = 0, ss = 0;
      for (std::int64_t i = 0; i < m; ++i) mean += static_cast<double>(p[i]);
      mean /= static_cast<double>(m);
      for (std::int64_t i = 0; i < m; ++i) ss += (static_cast<double>(p[i]) - mean) * (static_cast<double>(p[i]) - mean);
      const double var = ss / static_cast<double>(m);
      mu[ch] = static_cast<Real>(mean);
      inv_std[ch] = static_cast<Real>(1.0 / std::sqrt(var + opt.eps));
      if (running_mean && running_var) {
        auto rm = running_mean->mutable_data();
        auto rv = running_var->mutable_data();
        const double unbiased = m > 1 ? ss / static_cast<double>(m - 1) : var;
        rm[ch] = static_cast<Real>((1.0 - opt.momentum) * rm[ch] + opt.momentum * mean);
        rv[ch] = static_cast<Real>((1.0 - opt.momentum) * rv[ch] + opt.momentum * unbiased);
      }
    }
  } else {
    if (!running_mean || !running_var) throw ContractError("batchnorm: eval mode requires running statistics");
    const auto rm = running_mean->data(), rv = running_var->data();
    for (std::int64_t ch = 0; ch < c; ++ch) {
      mu[ch] = rm[ch];
      inv_std[ch] = static_cast<Real>(1.0 / std::sqrt(static_cast<double>(rv[ch]) + opt.eps));
    }
  }
  for (std::int64_t ch = 0; ch < c; ++ch) {
    Eigen::Map<const Arr> p(in.data() + ch * m, m);
    Eigen::Map<Arr> xh(xhat.data() + ch * m, m);
    xh = (p - mu[ch]) * inv_std[ch];
    Eigen::Map<Arr>(out.data() + ch * m, m) = gm[ch] * xh + bt[ch];
  }
  const bool training = opt.training;
  return Tensor<Real>::make_result(
      x.shape(), std::move(out), {x, gamma, beta},
      [x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std), c, m, training](std::span<const Real> g) {
        using Arr = Eigen::Array<Real, Eigen::Dynamic, 1>;
        const auto gm = gamma.data();
        std::vector<Real> sum_g(c), sum_gx(c);
        for (std::int64_t ch = 0; ch < c; ++ch) {
          sum_g[ch] = detail::ordered_sum(g.data() + ch * m, m);
          sum_gx[ch] = detail::ordered_dot(g.data() + ch * m, xhat.data() + ch * m, m);
        }
        if (gamma.requires_grad()) {
          auto gg = gamma.grad_buffer();
          for (std::int64_t ch = 0; ch < c; ++ch) gg[ch] += sum_gx[ch];
        }
        if (beta.requires_grad()) {
          auto gb = beta.grad_buffer();
          for (std::int64_t ch = 0; ch < c; ++ch) gb[ch] += sum_g[ch];
        }
        if (!x.requires_grad()) return;
        auto gx = x.grad_buffer();
        const Real inv_m = Real(1) / static_cast<Real>(m);
        for (std::int64_t ch = 0; ch < c; ++ch) {
          const Real k = gm[ch] * inv_std[ch];
          Eigen::Map<const Arr> gc(g.data() + ch * m, m);
          Eigen::Map<const Arr> xh(xhat.data() + ch * m, m);
          Eigen::Map<Arr> dx(gx.data() + ch * m, m);
          if (training) {
            dx += k * (gc - inv_m * sum_g[ch] - xh * (inv_m * sum_gx[ch]));
          } else {
            dx += k * gc;
          }
        }
      });
}

/// Non-overlapping max pooling on [C,T,H,W] with window = stride = (kt,kh,kw).
/// Ties resolve to the first element in scan order.
template <typename Real>
Tensor<Real> maxpool3d(const Tensor<Real>& x, int kt, int kh, int kw) {
  if (x.rank() != 4) throw DimensionError("maxpool3d: expected [C,T,H,W], got " + shape_str(x.shape()));
  const std::int64_t c = x.dim(0), t = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::int64_t to = t / kt, ho = h / kh, wo = w / kw;
  if (to < 1) throw DimensionError("maxpool3d: temporal axis extent " + std::to_string(t) + " smaller than window");
  if (ho < 1) throw DimensionError("maxpool3d: height axis extent " + std::to_string(h) + " smaller than window");
  if (wo < 1) throw DimensionError("maxpool3d: width axis extent " + std::to_string(w) + " smaller than window");
  const auto in = x.data();
  std::vector<Real> out(static_cast<std::size_t>(c * to * ho * wo));
  std::vector<std::int64_t> arg(out.size());
  std::int64_t k = 0;
  for (std::int64_t ch = 0; ch < c; ++ch)
    for (std::int64_t a = 0; a < to; ++a)
      for (std::int64_t b = 0; b < ho; ++b)
        for (std::int64_t d = 0; d < wo; ++d, ++k) {
          std::int64_t best = -1;
          for (int i = 0; i < kt; ++i)
            for (int j = 0; j < kh; ++j)
              for (int l = 0; l < kw; ++l) {
                const std::int64_t idx = ((ch * t + a * kt + i) * h + b * kh + j) * w + d * kw + l;
                if (best < 0 || in[idx] > in[best]) best = idx;
              }
          arg[k] = best;
          out[k] = in[best];
        }
  if (auto* probe = detail::kink_probe()) {
    std::uint64_t hsh = 0;
    for (auto v : arg) hsh = hsh * 1000003ULL + static_cast<std::uint64_t>(v);
    probe->mix(hsh);
  }
  return Tensor<Real>::make_result({c, to, ho, wo}, std::move(out), {x},
                                   [x, arg = std::move(arg)](std::span<const Real> g) {
                                     auto gx = x.grad_buffer();
                                     for (std::size_t i = 0; i < arg.size(); ++i) gx[arg[i]] += g[i];
                                   });
}

template <typename Real>
Tensor<Real> maxpool2d(const Tensor<Real>& x, int kh, int kw) {
  if (x.rank() != 3) throw DimensionError("maxpool2d: expected [C,H,W], got " + shape_str(x.shape()));
  auto y = maxpool3d(reshape(x, {x.dim(0), 1, x.dim(1), x.dim(2)}), 1, kh, kw);
  return reshape(y, {y.dim(0), y.dim(2), y.dim(3)});
}

namespace detail {
struct LinearTap {
  std::int64_t i0, i1;
  double w0, w1;
};

// align_corners=false sampling: src = (dst + 0.5) * in/out - 0.5, clamped at the border.
inline std::vector<LinearTap> bilinear_taps(std::int64_t in, std::int64_t out) {
  std::vector<LinearTap> taps(out);
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (std::int64_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * ratio - 0.5;
    if (src < 0) src = 0;
    auto i0 = static_cast<std::int64_t>(std::floor(src));
    if (i0 > in - 1) i0 = in - 1;
    const std::int64_t i1 = std::min(i0 + 1, in - 1);
    const double frac = src - static_cast<double>(i0);
    taps[o] = {i0, i1, 1.0 - frac, frac};
  }
  return taps;
}
}  // namespace detail

/// Bilinear resampling of the two trailing (H,W) axes; leading axes are batched.
template <typename Real>
Tensor<Real> resize_bilinear(const Tensor<Real>& x, std::int64_t out_h, std::int64_t out_w) {
  if (x.rank() < 2) throw DimensionError("resize_bilinear: need at least [H,W], got " + shape_str(x.shape()));
  if (out_h < 1 || out_w < 1) throw DimensionError("resize_bilinear: output extents must be positive");
  const std::int64_t h = x.dim(-2), w = x.dim(-1);
  const std::int64_t planes = x.numel() / (h * w);
  auto ty = detail::bilinear_taps(h, out_h);
  auto tx = detail::bilinear_taps(w, out_w);
  Shape shape = x.shape();
  shape[shape.size() - 2] = out_h;
  shape[shape.size() - 1] = out_w;
  const auto in = x.data();
  std::vector<Real> out(static_cast<std::size_t>(planes * out_h * out_w));
  for (std::int64_t p = 0; p < planes; ++p) {
    const Real* src = in.data() + p * h * w;
    Real* dst = out.data() + p * out_h * out_w;
    for (std::int64_t r = 0; r < out_h; ++r) {
      const auto& a = ty[r];
      for (std::int64_t q = 0; q < out_w; ++q) {
        const auto& b = tx[q];
        dst[r * out_w + q] = static_cast<Real>(
            a.w0 * (b.w0 * src[a.i0 * w + b.i0] + b.w1 * src[a.i0 * w + b.i1]) +
            a.w1 * (b.w0 * src[a.i1 * w + b.i0] + b.w1 * src[a.i1 * w + b.i1]));
      }
    }
  }
  return Tensor<Real>::make_result(std::move(shape), std::move(out), {x},
                                   [x, ty, tx, planes, h, w, out_h, out_w](std::span<const Real> g) {
                                     auto gx = x.grad_buffer();
                                     for (std::int64_t p = 0; p < planes; ++p) {
                                       Real* dst = gx.data() + p * h * w;
                                       const Real* go = g.data() + p * out_h * out_w;
                                       for (std::int64_t r = 0; r < out_h; ++r) {
                                         const auto& a = ty[r];
                                         for (std::int64_t q = 0; q < out_w; ++q) {
                                           const auto& b = tx[q];
                                           const double v = go[r * out_w + q];
                                           dst[a.i0 * w + b.i0] += static_cast<Real>(v * a.w0 * b.w0);
                                           dst[a.i0 * w + b.i1] += static_cast<Real>(v * a.w0 * b.w1);
                                           dst[a.i1 * w + b.i0] += static_cast<Real>(v * a.w1 * b.w0);
                                           dst[a.i1 * w + b.i1] += static_cast<Real>(v * a.w1 * b.w1);
                                         }
                                       }
                                     }
                                   });
}

template <typename Real>
Tensor<Real> upsample_bilinear(const Tensor<Real>& x, int factor) {
  if (factor < 1) throw ContractError("upsample_bilinear: factor must be >= 1");
  return resize_bilinear(x, x.dim(-2) * factor, x.dim(-1) * factor);
}

}  // namespace gastkit
