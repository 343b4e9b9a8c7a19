#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <array>
#include <utility>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "gastkit/ops.hpp"

namespace gastkit {

using Triple = std::array<int, 3>;

namespace detail {

struct Conv3dGeometry {
  std::int64_t cin, t, h, w;
  std::int64_t cout, kt, kh, kw;
  std::int64_t st, sh, sw, pt, ph, pw;
  std::int64_t to, ho, wo;

  std::int64_t k() const { return cin * kt * kh * kw; }
  std::int64_t p() const { return to * ho * wo; }
  bool pointwise() const {
    return kt == 1 && kh == 1 && kw == 1 && st == 1 && sh == 1 && sw == 1 && pt == 0 && ph == 0 && pw == 0;
  }
};

inline std::int64_t conv_out_extent(std::int64_t in, std::int64_t k, std::int64_t stride, std::int64_t pad,
                                    const char* axis) {
  const std::int64_t span = in + 2 * pad - k;
  if (span < 0) {
    throw DimensionError(std::string("conv: ") + axis + " axis extent " + std::to_string(in) + " with padding " +
                         std::to_string(pad) + " is smaller than kernel " + std::to_string(k));
  }
  return span / stride + 1;
}

// Output columns [lo, hi) whose input column wo*sw - pw + c lies inside the row.
inline std::pair<std::int64_t, std::int64_t> valid_columns(const Conv3dGeometry& g, std::int64_t c) {
  std::int64_t lo = 0;
  while (lo < g.wo && lo * g.sw - g.pw + c < 0) ++lo;
  std::int64_t hi = g.wo;
  while (hi > lo && (hi - 1) * g.sw - g.pw + c >= g.w) --hi;
  return {lo, hi};
}

// Rows of `col` index (ci, a, b, c) kernel taps; columns index output positions.
template <typename Real>
void im2col(const Real* x, const Conv3dGeometry& g, Real* col) {
  const std::int64_t p = g.p();
  std::int64_t row = 0;
  for (std::int64_t ci = 0; ci < g.cin; ++ci)
    for (std::int64_t a = 0; a < g.kt; ++a)
      for (std::int64_t b = 0; b < g.kh; ++b)
        for (std::int64_t c = 0; c < g.kw; ++c, ++row) {
          Real* dst = col + row * p;
          for (std::int64_t to = 0; to < g.to; ++to) {
            const std::int64_t ti = to * g.st - g.pt + a;
            for (std::int64_t ho = 0; ho < g.ho; ++ho, dst += g.wo) {
              const std::int64_t hi = ho * g.sh - g.ph + b;
              if (ti < 0 || ti >= g.t || hi < 0 || hi >= g.h) {
                std::fill_n(dst, g.wo, Real(0));
                continue;
              }
              const Real* src = x + ((ci * g.t + ti) * g.h + hi) * g.w;
              const auto [lo, hi_end] = valid_columns(g, c);
              std::fill(dst, dst + lo, Real(0));
              if (g.sw == 1) {
                std::copy(src + lo - g.pw + c, src + hi_end - g.pw + c, dst + lo);
              } else {
                for (std::int64_t wo = lo; wo < hi_end; ++wo) dst[wo] = src[wo * g.sw - g.pw + c];
              }
              std::fill(dst + hi_end, dst + g.wo, Real(0));
            }
          }
        }
}

template <typename Real>
void col2im_add(const Real* col, const Conv3dGeometry& g, Real* dx) {
  const std::int64_t p = g.p();
  std::int64_t row = 0;
  for (std::int64_t ci = 0; ci < g.cin; ++ci)
    for (std::int64_t a = 0; a < g.kt; ++a)
      for (std::int64_t b = 0; b < g.kh; ++b)
        for (std::int64_t c = 0; c < g.kw; ++c, ++row) {
          const Real* src = col + row * p;
          for (std::int64_t to = 0; to < g.to; ++to) {
            const std::int64_t ti = to * g.st - g.pt + a;
            for (std::int64_t ho = 0; ho < g.ho; ++ho, src += g.wo) {
              const std::int64_t hi = ho * g.sh - g.ph + b;
              if (ti < 0 || ti >= g.t || hi < 0 || hi >= g.h) continue;
              Real* dst = dx + ((ci * g.t + ti) * g.h + hi) * g.w;
              const auto [lo, hi_end] = valid_columns(g, c);
              for (std::int64_t wo = lo; wo < hi_end; ++wo) dst[wo * g.sw - g.pw + c] += src[wo];
            }
          }
        }
}

template <typename Real>
using RowMatrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace detail

/// 3D cross-correlation of input [Cin,T,H,W] with weight [Cout,Cin,kT,kH,kW].
///
/// Lowered to im2col + GEMM. A padded axis needs an odd kernel extent so the
/// padding stays symmetric; unpadded axes accept any extent.
template <typename Real>
Tensor<Real> conv3d(const Tensor<Real>& input, const Tensor<Real>& weight, const Tensor<Real>& bias, Triple stride,
                    Triple padding) {
  if (input.rank() != 4) throw DimensionError("conv3d: input must be [Cin,T,H,W], got " + shape_str(input.shape()));
  if (weight.rank() != 5) {
    throw DimensionError("conv3d: weight must be [Cout,Cin,kT,kH,kW], got " + shape_str(weight.shape()));
  }
  detail::Conv3dGeometry g{};
  g.cin = input.dim(0);
  g.t = input.dim(1);
  g.h = input.dim(2);
  g.w = input.dim(3);
  g.cout = weight.dim(0);
  g.kt = weight.dim(2);
  g.kh = weight.dim(3);
  g.kw = weight.dim(4);
  if (weight.dim(1) != g.cin) {
    throw DimensionError("conv3d: input channel axis has extent " + std::to_string(g.cin) + " but weight expects " +
                         std::to_string(weight.dim(1)));
  }
  if (bias.numel() != g.cout) {
    throw DimensionError("conv3d: bias has " + std::to_string(bias.numel()) + " entries for " +
                         std::to_string(g.cout) + " output channels");
  }
  const char* names[3] = {"temporal", "height", "width"};
  const std::int64_t ks[3] = {g.kt, g.kh, g.kw};
  for (int i = 0; i < 3; ++i) {
    if (ks[i] % 2 == 0 && padding[i] > 0) {
      throw DimensionError(std::string("conv3d: kernel extent on the ") + names[i] +
                           " axis must be odd when that axis is padded, got " + std::to_string(ks[i]));
    }
    if (stride[i] < 1) throw DimensionError(std::string("conv3d: stride on the ") + names[i] + " axis must be >= 1");
    if (padding[i] < 0) throw DimensionError(std::string("conv3d: padding on the ") + names[i] + " axis is negative");
  }
  g.st = stride[0];
  g.sh = stride[1];
  g.sw = stride[2];
  g.pt = padding[0];
  g.ph = padding[1];
  g.pw = padding[2];
  g.to = detail::conv_out_extent(g.t, g.kt, g.st, g.pt, "temporal");
  g.ho = detail::conv_out_extent(g.h, g.kh, g.sh, g.ph, "height");
  g.wo = detail::conv_out_extent(g.w, g.kw, g.sw, g.pw, "width");

  const std::int64_t kdim = g.k(), pdim = g.p();
  std::vector<Real> col;
  const Real* col_ptr = input.data().data();
  if (!g.pointwise()) {
    col.resize(static_cast<std::size_t>(kdim * pdim));
    detail::im2col(input.data().data(), g, col.data());
    col_ptr = col.data();
  }
  using Mat = detail::RowMatrix<Real>;
  std::vector<Real> out(static_cast<std::size_t>(g.cout * pdim));
  {
    Eigen::Map<const Mat> wm(weight.data().data(), g.cout, kdim);
    Eigen::Map<const Mat> cm(col_ptr, kdim, pdim);
    Eigen::Map<Mat> om(out.data(), g.cout, pdim);
    om.noalias() = wm * cm;
    const auto b = bias.data();
    for (std::int64_t o = 0; o < g.cout; ++o) om.row(o).array() += b[o];
  }
  return Tensor<Real>::make_result(
      {g.cout, g.to, g.ho, g.wo}, std::move(out), {input, weight, bias},
      [input, weight, bias, g, col = std::move(col)](std::span<const Real> grad) {
        const std::int64_t kdim = g.k(), pdim = g.p();
        Eigen::Map<const Mat> gm(grad.data(), g.cout, pdim);
        const Real* col_ptr = g.pointwise() ? input.data().data() : col.data();
        if (weight.requires_grad()) {
          Eigen::Map<const Mat> cm(col_ptr, kdim, pdim);
          Eigen::Map<Mat> gw(weight.grad_buffer().data(), g.cout, kdim);
          gw.noalias() += gm * cm.transpose();
        }
        if (bias.requires_grad()) {
          auto gb = bias.grad_buffer();
          for (std::int64_t o = 0; o < g.cout; ++o) gb[o] += detail::ordered_sum(grad.data() + o * pdim, pdim);
        }
        if (input.requires_grad()) {
          Eigen::Map<const Mat> wm(weight.data().data(), g.cout, kdim);
          if (g.pointwise()) {
            Eigen::Map<Mat> gx(input.grad_buffer().data(), kdim, pdim);
            gx.noalias() += wm.transpose() * gm;
          } else {
            Mat dcol(kdim, pdim);
            dcol.noalias() = wm.transpose() * gm;
            detail::col2im_add(dcol.data(), g, input.grad_buffer().data());
          }
        }
      });
}

/// 2D cross-correlation of input [Cin,H,W] with weight [Cout,Cin,kH,kW].
template <typename Real>
Tensor<Real> conv2d(const Tensor<Real>& input, const Tensor<Real>& weight, const Tensor<Real>& bias, int stride,
                    int padding) {
  if (input.rank() != 3) throw DimensionError("conv2d: input must be [Cin,H,W], got " + shape_str(input.shape()));
  if (weight.rank() != 4) {
    throw DimensionError("conv2d: weight must be [Cout,Cin,kH,kW], got " + shape_str(weight.shape()));
  }
  auto x5 = reshape(input, {input.dim(0), 1, input.dim(1), input.dim(2)});
  auto w5 = reshape(weight, {weight.dim(0), weight.dim(1), 1, weight.dim(2), weight.dim(3)});
  auto y = conv3d(x5, w5, bias, {1, stride, stride}, {0, padding, padding});
  return reshape(y, {y.dim(0), y.dim(2), y.dim(3)});
}

}  // namespace gastkit
