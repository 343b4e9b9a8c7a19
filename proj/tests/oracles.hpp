#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "gastkit/box.hpp"
#include "gastkit/decoder.hpp"

// Brute-force reference implementations. Each one follows the textbook
// definition as directly as possible and shares no code with the library.
namespace gastkit::oracle {

inline double box_iou(const Box& a, const Box& b) {
  const double ix1 = std::max(a.x1, b.x1), iy1 = std::max(a.y1, b.y1);
  const double ix2 = std::min(a.x2, b.x2), iy2 = std::min(a.y2, b.y2);
  const double inter = (ix2 > ix1 && iy2 > iy1) ? (ix2 - ix1) * (iy2 - iy1) : 0.0;
  const double ua = (a.x2 - a.x1) * (a.y2 - a.y1) + (b.x2 - b.x1) * (b.y2 - b.y1) - inter;
  return inter > 0 ? inter / ua : 0.0;
}

// Direct 3D cross-correlation, input [Cin,T,H,W], weight [Cout,Cin,kT,kH,kW].
inline std::vector<double> conv3d(const std::vector<double>& x, int cin, int t, int h, int w,
                                  const std::vector<double>& wt, int cout, int kt, int kh, int kw,
                                  const std::vector<double>& bias, int st, int sh, int sw, int pt, int ph, int pw,
                                  int& to, int& ho, int& wo) {
  to = (t + 2 * pt - kt) / st + 1;
  ho = (h + 2 * ph - kh) / sh + 1;
  wo = (w + 2 * pw - kw) / sw + 1;
  std::vector<double> y(static_cast<std::size_t>(cout) * to * ho * wo);
  for (int o = 0; o < cout; ++o)
    for (int a = 0; a < to; ++a)
      for (int b = 0; b < ho; ++b)
        for (int c = 0; c < wo; ++c) {
          double acc = bias[o];
          for (int i = 0; i < cin; ++i)
            for (int p = 0; p < kt; ++p)
              for (int q = 0; q < kh; ++q)
                for (int r = 0; r < kw; ++r) {
                  const int ti = a * st - pt + p, hi = b * sh - ph + q, wi = c * sw - pw + r;
                  if (ti < 0 || ti >= t || hi < 0 || hi >= h || wi < 0 || wi >= w) continue;
                  acc += x[((static_cast<std::size_t>(i) * t + ti) * h + hi) * w + wi] *
                         wt[(((static_cast<std::size_t>(o) * cin + i) * kt + p) * kh + q) * kw + r];
                }
          y[((static_cast<std::size_t>(o) * to + a) * ho + b) * wo + c] = acc;
        }
  return y;
}

// Focal loss by direct substitution, pixel by pixel.
inline double focal_loss(const std::vector<double>& p, const std::vector<double>& y, double alpha, double beta) {
  double sum = 0;
  int npos = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (y[i] == 1.0) {
      ++npos;
      sum += std::pow(1.0 - p[i], alpha) * std::log(p[i]);
    } else {
      sum += std::pow(1.0 - y[i], beta) * std::pow(p[i], alpha) * std::log(1.0 - p[i]);
    }
  }
  return -sum / std::max(npos, 1);
}

inline double pull_loss(const std::vector<double>& tl, const std::vector<double>& br) {
  double s = 0;
  for (std::size_t k = 0; k < tl.size(); ++k) {
    const double e = 0.5 * (tl[k] + br[k]);
    s += (tl[k] - e) * (tl[k] - e) + (br[k] - e) * (br[k] - e);
  }
  return s / static_cast<double>(tl.size());
}

inline double push_loss(const std::vector<double>& tl, const std::vector<double>& br, double margin) {
  const std::size_t k = tl.size();
  if (k < 2) return 0.0;
  double s = 0;
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = 0; b < k; ++b) {
      if (a == b) continue;
      const double ea = 0.5 * (tl[a] + br[a]), eb = 0.5 * (tl[b] + br[b]);
      s += std::max(0.0, margin - std::abs(ea - eb));
    }
  return s / (static_cast<double>(k) * static_cast<double>(k - 1));
}

// Largest r >= 1 such that every displacement of the corners by at most r per
// axis keeps IoU >= min_iou, found by enumerating integer displacements.
inline int gaussian_radius(double width, double height, double min_iou) {
  auto ok = [&](int r) {
    const Box t{0, 0, width, height};
    for (int a = -r; a <= r; ++a)
      for (int b = -r; b <= r; ++b)
        for (int c = -r; c <= r; ++c)
          for (int d = -r; d <= r; ++d) {
            const Box m{t.x1 + a, t.y1 + b, t.x2 + c, t.y2 + d};
            const double v = (m.x2 > m.x1 && m.y2 > m.y1) ? box_iou(t, m) : 0.0;
            if (v < min_iou) return false;
          }
    return true;
  };
  int r = 0;
  while (ok(r + 1)) ++r;
  return std::max(r, 1);
}

/// NMS by its fixed-point characterization: the kept set K is the subset in
/// which a box belongs to K exactly when no higher-ranked member of K of the
/// same category overlaps it with IoU >= t. Searched over all 2^n subsets; the
/// characterization has exactly one solution, which is returned in rank order.
inline std::vector<Detection> nms(const std::vector<Detection>& dets, double t, int* solutions = nullptr) {
  const int n = static_cast<int>(dets.size());
  std::vector<int> rank(n);
  for (int i = 0; i < n; ++i) rank[i] = i;
  std::stable_sort(rank.begin(), rank.end(), [&](int a, int b) { return dets[a].score > dets[b].score; });
  std::vector<int> pos(n);
  for (int i = 0; i < n; ++i) pos[rank[i]] = i;
  std::optional<std::uint32_t> found;
  int count = 0;
  for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
    bool consistent = true;
    for (int i = 0; i < n && consistent; ++i) {
      bool suppressed = false;
      for (int j = 0; j < n; ++j) {
        if (j == i || !(mask >> j & 1u) || pos[j] >= pos[i]) continue;
        if (dets[j].category == dets[i].category && box_iou(dets[j].box, dets[i].box) >= t) suppressed = true;
      }
      const bool in = mask >> i & 1u;
      consistent = in != suppressed;
    }
    if (consistent) {
      ++count;
      found = mask;
    }
  }
  if (solutions) *solutions = count;
  std::vector<Detection> out;
  if (!found) return out;
  for (int i : rank)
    if (*found >> i & 1u) out.push_back(dets[i]);
  return out;
}

struct Pairing {
  std::size_t tl, br;
  double score;
};

/// Enumerates every one-to-one matching between admissible (TL, BR) pairs and
/// returns the maximum-score matching, where matchings compare by their
/// descending-sorted score sequences lexicographically (a strict extension of
/// a sequence is larger). Admissible: same category, TL strictly up-left of BR,
/// embedding distance <= emb_threshold.
inline std::vector<Pairing> best_matching(const std::vector<Corner>& tls, const std::vector<Corner>& brs,
                                          double emb_threshold, std::vector<Pairing>* max_sum = nullptr) {
  std::vector<Pairing> best, best_sum, current;
  double best_total = -1;
  std::vector<bool> br_used(brs.size(), false);
  auto key = [](std::vector<Pairing> m) {
    std::vector<double> s;
    for (const auto& p : m) s.push_back(p.score);
    std::sort(s.begin(), s.end(), std::greater<>());
    return s;
  };
  std::function<void(std::size_t)> rec = [&](std::size_t i) {
    if (i == tls.size()) {
      const auto a = key(current), b = key(best);
      if (std::lexicographical_compare(b.begin(), b.end(), a.begin(), a.end())) best = current;
      double total = 0;
      for (const auto& p : current) total += p.score;
      if (total > best_total) {
        best_total = total;
        best_sum = current;
      }
      return;
    }
    rec(i + 1);
    for (std::size_t j = 0; j < brs.size(); ++j) {
      if (br_used[j]) continue;
      const Corner& a = tls[i];
      const Corner& b = brs[j];
      if (a.category != b.category || !(a.x < b.x && a.y < b.y) || std::abs(a.embedding - b.embedding) > emb_threshold)
        continue;
      br_used[j] = true;
      current.push_back({i, j, 0.5 * (a.score + b.score)});
      rec(i + 1);
      current.pop_back();
      br_used[j] = false;
    }
  };
  rec(0);
  if (max_sum) *max_sum = best_sum;
  return best;
}

/// Matching flags by exhaustive search: among all injective partial
/// assignments of detections to same-category ground truths with IoU >= t,
/// keeps those where, visiting detections by descending score, each detection
/// holds the highest-IoU ground truth not held by an earlier one (or nothing
/// when none qualifies). Exactly one assignment satisfies this.
inline std::vector<bool> match_flags(const std::vector<Detection>& dets, const std::vector<LabeledBox>& gts, double t,
                                     int* solutions = nullptr) {
  const std::size_t n = dets.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });
  std::vector<int> assign(n, -1);
  std::vector<bool> result(n, false);
  int count = 0;
  auto valid = [&]() {
    std::vector<bool> held(gts.size(), false);
    for (std::size_t i : order) {
      int want = -1;
      double best = -1;
      for (std::size_t g = 0; g < gts.size(); ++g) {
        if (held[g] || gts[g].category != dets[i].category) continue;
        const double v = box_iou(dets[i].box, gts[g].box);
        if (v > best) {
          best = v;
          want = static_cast<int>(g);
        }
      }
      if (want >= 0 && best < t) want = -1;
      if (assign[i] != want) return false;
      if (want >= 0) held[want] = true;
    }
    return true;
  };
  std::function<void(std::size_t, std::vector<bool>&)> rec = [&](std::size_t i, std::vector<bool>& used) {
    if (i == n) {
      if (valid()) {
        ++count;
        for (std::size_t k = 0; k < n; ++k) result[k] = assign[k] >= 0;
      }
      return;
    }
    assign[i] = -1;
    rec(i + 1, used);
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (used[g] || gts[g].category != dets[i].category || box_iou(dets[i].box, gts[g].box) < t) continue;
      used[g] = true;
      assign[i] = static_cast<int>(g);
      rec(i + 1, used);
      used[g] = false;
      assign[i] = -1;
    }
  };
  std::vector<bool> used(gts.size(), false);
  rec(0, used);
  if (solutions) *solutions = count;
  return result;
}

// Every-point AP: each true positive at rank k adds 1/num_gt times the best
// precision reached at any rank >= k.
inline double average_precision(const std::vector<bool>& flags, int num_gt) {
  const std::size_t n = flags.size();
  double ap = 0;
  for (std::size_t k = 0; k < n; ++k) {
    if (!flags[k]) continue;
    double best = 0;
    int tp = 0;
    for (std::size_t j = 0; j < n; ++j) {
      tp += flags[j] ? 1 : 0;
      if (j >= k) best = std::max(best, static_cast<double>(tp) / static_cast<double>(j + 1));
    }
    ap += best / num_gt;
  }
  return ap;
}

inline double pck(const std::vector<Corner>& pred, const std::vector<Corner>& truth, double radius) {
  int hits = 0;
  for (const auto& g : truth) {
    bool hit = false;
    for (const auto& p : pred)
      hit = hit || (p.kind == g.kind && p.category == g.category && std::hypot(p.x - g.x, p.y - g.y) <= radius);
    hits += hit ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

}  // namespace gastkit::oracle
