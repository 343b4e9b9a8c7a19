#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "gastkit/box.hpp"
#include "gastkit/model.hpp"

namespace gastkit {

struct LossConfig {
  double w_focal = 1.0;
  double w_pull = 0.1;
  double w_push = 0.1;
  double focal_alpha = 2.0;
  double focal_beta = 4.0;
  double push_margin = 1.0;
  double gaussian_iou = 0.3;

  void validate() const {
    if (w_focal < 0 || w_pull < 0 || w_push < 0) throw ContractError("LossConfig: weights must be non-negative");
  }
};

struct CornerTarget {
  int category = 0;
  int tl_x = 0, tl_y = 0;
  int br_x = 0, br_y = 0;
  int object_id = 0;
};

/// Supervision for one frame slot: Gaussian-splatted TL and BR heatmaps
/// ([N,H,W] row-major) plus the exact corner cells of every object.
struct HeatmapTarget {
  int categories = 0;
  int height = 0;
  int width = 0;
  std::vector<double> tl;
  std::vector<double> br;
  std::vector<CornerTarget> objects;

  const std::vector<double>& heatmap(CornerKind k) const { return k == CornerKind::top_left ? tl : br; }
};

// Smallest IoU with box (0,0,w,h) when each of its four coordinates moves by
// +-r. IoU is quasi-concave in each coordinate, so the extremes are vertices.
inline double worst_displaced_iou(double width, double height, int r) {
  const Box truth{0, 0, width, height};
  double worst = 1.0;
  for (int m = 0; m < 16; ++m) {
    const Box moved{truth.x1 + ((m & 1) ? r : -r), truth.y1 + ((m & 2) ? r : -r), truth.x2 + ((m & 4) ? r : -r),
                    truth.y2 + ((m & 8) ? r : -r)};
    worst = std::min(worst, moved.valid() ? iou(truth, moved) : 0.0);
  }
  return worst;
}

/// Largest integer radius r such that both corners displaced anywhere within
/// r (per axis) keep IoU >= min_iou with the true box; never below 1.
inline int gaussian_radius(double width, double height, double min_iou) {
  int r = 0;
  while (r < 4096 && worst_displaced_iou(width, height, r + 1) >= min_iou) ++r;
  return std::max(r, 1);
}

// Corner cell of a working-resolution coordinate, clamped into the map.
inline int corner_cell(double v, int extent) {
  return std::clamp(static_cast<int>(std::lround(v)), 0, extent - 1);
}

inline void splat_gaussian(std::vector<double>& map, int width, int height, int category, int cx, int cy, int radius) {
  const double sigma = radius / 3.0;
  double* plane = map.data() + static_cast<std::size_t>(category) * width * height;
  for (int dy = -radius; dy <= radius; ++dy) {
    const int y = cy + dy;
    if (y < 0 || y >= height) continue;
    for (int dx = -radius; dx <= radius; ++dx) {
      const int x = cx + dx;
      if (x < 0 || x >= width) continue;
      const double v = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
      plane[y * width + x] = std::max(plane[y * width + x], v);
    }
  }
}

/// Builds heatmap targets from input-resolution boxes of one frame. Boxes are
/// mapped to the working grid by dividing by `stride`; corner cells are the
/// rounded, clamped corner coordinates.
inline HeatmapTarget make_targets(std::span<const LabeledBox> boxes, int categories, int height, int width,
                                  int stride, const LossConfig& cfg = {}) {
  HeatmapTarget t;
  t.categories = categories;
  t.height = height;
  t.width = width;
  t.tl.assign(static_cast<std::size_t>(categories) * height * width, 0.0);
  t.br.assign(t.tl.size(), 0.0);
  int id = 0;
  for (const auto& lb : boxes) {
    if (lb.category < 0 || lb.category >= categories) {
      throw ContractError("make_targets: category " + std::to_string(lb.category) + " out of range");
    }
    if (!lb.box.valid()) {
      warn("make_targets: skipping degenerate box of category " + std::to_string(lb.category));
      continue;
    }
    const Box b = lb.box.scaled(1.0 / stride);
    CornerTarget c{lb.category, corner_cell(b.x1, width), corner_cell(b.y1, height), corner_cell(b.x2, width),
                   corner_cell(b.y2, height), id++};
    const int r = gaussian_radius(b.width(), b.height(), cfg.gaussian_iou);
    splat_gaussian(t.tl, width, height, c.category, c.tl_x, c.tl_y, r);
    splat_gaussian(t.br, width, height, c.category, c.br_x, c.br_y, r);
    t.objects.push_back(c);
  }
  return t;
}

/// Penalty-reduced focal loss over a [N,H,W] heatmap, normalized by the number
/// of exact-corner (target == 1) pixels. Predictions are clamped to
/// [1e-4, 1-1e-4] inside the logarithms.
template <typename Real>
Tensor<Real> focal_loss(const Tensor<Real>& pred, std::span<const double> target, double alpha = 2.0,
                        double beta = 4.0) {
  if (static_cast<std::int64_t>(target.size()) != pred.numel()) {
    throw DimensionError("focal_loss: target has " + std::to_string(target.size()) + " values, prediction " +
                         shape_str(pred.shape()));
  }
  constexpr double kClamp = 1e-4;
  const auto p = pred.data();
  std::size_t npos = 0;
  for (double y : target) npos += (y == 1.0);
  const double norm = 1.0 / static_cast<double>(std::max<std::size_t>(npos, 1));
  double total = 0;
  std::vector<Real> dp(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double raw = p[i];
    const double q = std::clamp(raw, kClamp, 1.0 - kClamp);
    const bool inside = raw > kClamp && raw < 1.0 - kClamp;
    double term, dterm;
    if (target[i] == 1.0) {
      term = std::pow(1 - q, alpha) * std::log(q);
      dterm = -alpha * std::pow(1 - q, alpha - 1) * std::log(q) + std::pow(1 - q, alpha) / q;
    } else {
      const double wneg = std::pow(1 - target[i], beta);
      term = wneg * std::pow(q, alpha) * std::log(1 - q);
      dterm = wneg * (alpha * std::pow(q, alpha - 1) * std::log(1 - q) - std::pow(q, alpha) / (1 - q));
    }
    total += term;
    dp[i] = static_cast<Real>(inside ? -norm * dterm : 0.0);
  }
  return Tensor<Real>::make_result({}, {static_cast<Real>(-norm * total)}, {pred},
                                   [pred, dp = std::move(dp)](std::span<const Real> g) {
                                     auto gp = pred.grad_buffer();
                                     for (std::size_t i = 0; i < dp.size(); ++i) gp[i] += g[0] * dp[i];
                                   });
}

// (1/K) sum_k (tl_k - e_k)^2 + (br_k - e_k)^2 with e_k the pair mean.
template <typename Real>
Tensor<Real> pull_loss(const Tensor<Real>& tl, const Tensor<Real>& br) {
  const auto a = tl.data(), b = br.data();
  const double k = static_cast<double>(a.size());
  double total = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double e = (static_cast<double>(a[i]) + b[i]) / 2.0;
    total += (a[i] - e) * (a[i] - e) + (b[i] - e) * (b[i] - e);
  }
  return Tensor<Real>::make_result({}, {static_cast<Real>(total / k)}, {tl, br}, [tl, br, k](std::span<const Real> g) {
    const auto a = tl.data(), b = br.data();
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double d = (static_cast<double>(a[i]) - b[i]) / k * g[0];
      if (tl.requires_grad()) tl.grad_buffer()[i] += static_cast<Real>(d);
      if (br.requires_grad()) br.grad_buffer()[i] -= static_cast<Real>(d);
    }
  });
}

// 1/(K(K-1)) sum_{j != k} max(0, margin - |e_j - e_k|); zero for K < 2.
template <typename Real>
Tensor<Real> push_loss(const Tensor<Real>& tl, const Tensor<Real>& br, double margin) {
  const auto a = tl.data(), b = br.data();
  const std::size_t k = a.size();
  std::vector<double> e(k);
  for (std::size_t i = 0; i < k; ++i) e[i] = (static_cast<double>(a[i]) + b[i]) / 2.0;
  const double norm = k > 1 ? 1.0 / (static_cast<double>(k) * static_cast<double>(k - 1)) : 0.0;
  double total = 0;
  std::vector<double> de(k, 0.0);
  for (std::size_t j = 0; j < k; ++j) {
    for (std::size_t i = 0; i < k; ++i) {
      if (i == j) continue;
      const double d = e[j] - e[i];
      const double hinge = margin - std::abs(d);
      if (hinge <= 0) continue;
      total += hinge;
      const double s = d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0);
      de[j] -= s * norm;
      de[i] += s * norm;
    }
  }
  return Tensor<Real>::make_result({}, {static_cast<Real>(total * norm)}, {tl, br},
                                   [tl, br, de = std::move(de)](std::span<const Real> g) {
                                     for (std::size_t i = 0; i < de.size(); ++i) {
                                       const auto d = static_cast<Real>(0.5 * de[i] * g[0]);
                                       if (tl.requires_grad()) tl.grad_buffer()[i] += d;
                                       if (br.requires_grad()) br.grad_buffer()[i] += d;
                                     }
                                   });
}

template <typename Real>
struct PullPush {
  Tensor<Real> pull;
  Tensor<Real> push;
};

/// Pull and push terms from TL/BR embedding maps [1,H,W] read at each object's
/// corner cells. Frames without objects yield zero for both.
template <typename Real>
PullPush<Real> pull_push_loss(const Tensor<Real>& tl_embedding, const Tensor<Real>& br_embedding,
                              std::span<const CornerTarget> objects, double margin = 1.0) {
  if (objects.empty()) return {Tensor<Real>::scalar(0), Tensor<Real>::scalar(0)};
  const std::int64_t w = tl_embedding.dim(-1);
  std::vector<std::int64_t> tl_idx, br_idx;
  for (const auto& o : objects) {
    tl_idx.push_back(static_cast<std::int64_t>(o.tl_y) * w + o.tl_x);
    br_idx.push_back(static_cast<std::int64_t>(o.br_y) * w + o.br_x);
  }
  auto tl = gather(tl_embedding, std::move(tl_idx));
  auto br = gather(br_embedding, std::move(br_idx));
  return {pull_loss(tl, br), push_loss(tl, br, margin)};
}

template <typename Real>
struct LossTerms {
  Tensor<Real> total;
  double focal = 0;
  double pull = 0;
  double push = 0;
};

/// Sum over both supervised frame slots of w_focal*focal + w_pull*pull + w_push*push.
/// The focal term of a slot adds the TL and BR heatmap losses.
template <typename Real>
LossTerms<Real> total_loss(const CornerFieldSet<Real>& pred, const HeatmapTarget& first, const HeatmapTarget& last,
                           const LossConfig& cfg) {
  cfg.validate();
  LossTerms<Real> out;
  Tensor<Real> total;
  auto accumulate = [&](const Tensor<Real>& term, double weight) {
    auto scaled = scale(term, static_cast<Real>(weight));
    total = total.defined() ? add(total, scaled) : scaled;
  };
  for (auto slot : kFrameSlots) {
    const HeatmapTarget& target = slot == FrameSlot::first ? first : last;
    for (auto kind : kCornerKinds) {
      auto f = focal_loss(pred.heatmap(slot, kind), target.heatmap(kind), cfg.focal_alpha, cfg.focal_beta);
      out.focal += f.item();
      accumulate(f, cfg.w_focal);
    }
    auto pp = pull_push_loss(pred.embedding(slot, CornerKind::top_left), pred.embedding(slot, CornerKind::bottom_right),
                             target.objects, cfg.push_margin);
    out.pull += pp.pull.item();
    out.push += pp.push.item();
    accumulate(pp.pull, cfg.w_pull);
    accumulate(pp.push, cfg.w_push);
  }
  out.total = total;
  return out;
}

}  // namespace gastkit
