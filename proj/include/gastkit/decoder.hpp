#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "gastkit/box.hpp"
#include "gastkit/model.hpp"

namespace gastkit {

struct Corner {
  CornerKind kind = CornerKind::top_left;
  int category = 0;
  int x = 0;
  int y = 0;
  double score = 0;
  double embedding = 0;
};

struct Detection {
  Box box;
  int category = 0;
  double score = 0;
};

struct DecoderConfig {
  double threshold = 0.1;
  int topk = 20;
  double emb_threshold = 0.5;
  double iou_nms = 0.5;
  int stride = ModelConfig::kOutputStride;
};

/// Peaks of a [N,H,W] heatmap: pixels that dominate their 3x3 neighbourhood
/// with score >= threshold. Among equal neighbours the one earliest in (y, x)
/// order wins. At most `topk` corners are kept per category, best first.
template <typename Real>
std::vector<Corner> extract_corners(const Tensor<Real>& heatmap, const Tensor<Real>& embedding, CornerKind kind,
                                    double threshold, int topk) {
  if (heatmap.rank() != 3) throw DimensionError("extract_corners: heatmap must be [N,H,W]");
  const int n = static_cast<int>(heatmap.dim(0));
  const int h = static_cast<int>(heatmap.dim(1));
  const int w = static_cast<int>(heatmap.dim(2));
  if (embedding.numel() != static_cast<std::int64_t>(h) * w) {
    throw DimensionError("extract_corners: embedding map must be [1,H,W] matching the heatmap");
  }
  const auto hm = heatmap.data();
  const auto emb = embedding.data();
  std::vector<Corner> out;
  for (int c = 0; c < n; ++c) {
    const Real* plane = hm.data() + static_cast<std::size_t>(c) * h * w;
    std::vector<Corner> found;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double v = plane[y * w + x];
        if (v < threshold) continue;
        bool peak = true;
        for (int dy = -1; dy <= 1 && peak; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            if (dy == 0 && dx == 0) continue;
            const int yy = y + dy, xx = x + dx;
            if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
            const double u = plane[yy * w + xx];
            const bool earlier = dy < 0 || (dy == 0 && dx < 0);
            if (u > v || (u == v && earlier)) {
              peak = false;
              break;
            }
          }
        }
        if (peak) found.push_back({kind, c, x, y, v, static_cast<double>(emb[y * w + x])});
      }
    }
    std::stable_sort(found.begin(), found.end(), [](const Corner& a, const Corner& b) { return a.score > b.score; });
    if (static_cast<int>(found.size()) > topk) found.resize(topk);
    out.insert(out.end(), found.begin(), found.end());
  }
  return out;
}

/// Greedy one-to-one pairing of TL and BR corners of the same category.
/// A pair is admissible when TL lies strictly up-left of BR and their
/// embeddings differ by at most emb_threshold; pairs are accepted in
/// descending mean score, each corner at most once. Boxes are in corner
/// (working-grid) coordinates.
inline std::vector<Detection> group_corners(const std::vector<Corner>& tls, const std::vector<Corner>& brs,
                                            double emb_threshold) {
  struct Candidate {
    std::size_t tl, br;
    double score;
  };
  std::vector<Candidate> cands;
  for (std::size_t i = 0; i < tls.size(); ++i) {
    for (std::size_t j = 0; j < brs.size(); ++j) {
      const Corner& a = tls[i];
      const Corner& b = brs[j];
      if (a.category != b.category) continue;
      if (!(a.x < b.x && a.y < b.y)) continue;
      if (std::abs(a.embedding - b.embedding) > emb_threshold) continue;
      cands.push_back({i, j, (a.score + b.score) / 2.0});
    }
  }
  std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) { return a.score > b.score; });
  std::vector<bool> tl_used(tls.size(), false), br_used(brs.size(), false);
  std::vector<Detection> out;
  for (const auto& c : cands) {
    if (tl_used[c.tl] || br_used[c.br]) continue;
    tl_used[c.tl] = br_used[c.br] = true;
    const Corner& a = tls[c.tl];
    const Corner& b = brs[c.br];
    out.push_back({{static_cast<double>(a.x), static_cast<double>(a.y), static_cast<double>(b.x),
                    static_cast<double>(b.y)},
                   a.category,
                   c.score});
  }
  return out;
}

/// Greedy per-category NMS: detections are visited by descending score
/// (stable) and dropped if IoU >= iou_threshold with a kept one.
inline std::vector<Detection> nms(std::vector<Detection> dets, double iou_threshold) {
  std::stable_sort(dets.begin(), dets.end(), [](const Detection& a, const Detection& b) { return a.score > b.score; });
  std::vector<Detection> kept;
  for (const auto& d : dets) {
    bool keep = true;
    for (const auto& k : kept) {
      if (k.category == d.category && iou(k.box, d.box) >= iou_threshold) {
        keep = false;
        break;
      }
    }
    if (keep) kept.push_back(d);
  }
  return kept;
}

// Union of the two predictions of one frame followed by NMS.
inline std::vector<Detection> merge_dual_predictions(const std::vector<Detection>& as_last,
                                                     const std::vector<Detection>& as_first, double iou_threshold) {
  std::vector<Detection> all = as_last;
  all.insert(all.end(), as_first.begin(), as_first.end());
  return nms(std::move(all), iou_threshold);
}

inline std::vector<Detection> to_input_resolution(std::vector<Detection> dets, int stride) {
  for (auto& d : dets) d.box = d.box.scaled(stride);
  return dets;
}

/// Decodes one frame slot of a CornerFieldSet into input-resolution boxes.
template <typename Real>
std::vector<Detection> decode_slot(const CornerFieldSet<Real>& fields, FrameSlot slot, const DecoderConfig& cfg) {
  auto tls = extract_corners(fields.heatmap(slot, CornerKind::top_left), fields.embedding(slot, CornerKind::top_left),
                             CornerKind::top_left, cfg.threshold, cfg.topk);
  auto brs = extract_corners(fields.heatmap(slot, CornerKind::bottom_right),
                             fields.embedding(slot, CornerKind::bottom_right), CornerKind::bottom_right, cfg.threshold,
                             cfg.topk);
  return to_input_resolution(group_corners(tls, brs, cfg.emb_threshold), cfg.stride);
}

}  // namespace gastkit
