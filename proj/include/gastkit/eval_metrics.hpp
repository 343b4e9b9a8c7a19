#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "gastkit/box.hpp"
#include "gastkit/decoder.hpp"

namespace gastkit {

/// Greedy matching on one image. Detections are visited in descending score
/// (stable); each takes the highest-IoU unconsumed ground truth of its
/// category if that IoU >= iou_threshold. Returns TP flags in input order.
inline std::vector<bool> match_detections(const std::vector<Detection>& dets, const std::vector<LabeledBox>& gts,
                                          double iou_threshold) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });
  std::vector<bool> consumed(gts.size(), false), tp(dets.size(), false);
  for (std::size_t i : order) {
    double best = -1;
    std::size_t best_j = gts.size();
    for (std::size_t j = 0; j < gts.size(); ++j) {
      if (consumed[j] || gts[j].category != dets[i].category) continue;
      const double v = iou(dets[i].box, gts[j].box);
      if (v > best) {
        best = v;
        best_j = j;
      }
    }
    if (best_j < gts.size() && best >= iou_threshold) {
      consumed[best_j] = true;
      tp[i] = true;
    }
  }
  return tp;
}

/// Every-point interpolated AP from TP flags sorted by descending score.
/// Precision is made non-increasing from the right and the area under the
/// resulting step function is returned. Absent (nullopt) when num_gt == 0.
inline std::optional<double> average_precision(const std::vector<bool>& flags, int num_gt) {
  if (num_gt <= 0) return std::nullopt;
  const std::size_t n = flags.size();
  std::vector<double> precision(n), recall(n);
  int tp = 0;
  for (std::size_t i = 0; i < n; ++i) {
    tp += flags[i] ? 1 : 0;
    precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
    recall[i] = static_cast<double>(tp) / num_gt;
  }
  for (std::size_t i = n; i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
  double ap = 0, prev_recall = 0;
  for (std::size_t i = 0; i < n; ++i) {
    ap += (recall[i] - prev_recall) * precision[i];
    prev_recall = recall[i];
  }
  return ap;
}

struct PrPoint {
  double threshold = 0;
  double precision = 0;
  double recall = 0;
};

inline std::vector<PrPoint> pr_curve(const std::vector<double>& scores, const std::vector<bool>& flags, int num_gt) {
  std::vector<PrPoint> out;
  int tp = 0;
  for (std::size_t i = 0; i < flags.size(); ++i) {
    tp += flags[i] ? 1 : 0;
    out.push_back({scores[i], static_cast<double>(tp) / static_cast<double>(i + 1),
                   num_gt > 0 ? static_cast<double>(tp) / num_gt : 0.0});
  }
  return out;
}

/// Fraction of ground-truth corners with a predicted corner of the same
/// category and kind within Euclidean distance `radius`. Absent without GT.
inline std::optional<double> corner_pck(const std::vector<Corner>& predicted, const std::vector<Corner>& truth,
                                        double radius) {
  if (radius <= 0) throw ContractError("corner_pck: radius must be positive");
  if (truth.empty()) return std::nullopt;
  std::size_t hit = 0;
  for (const auto& g : truth) {
    for (const auto& p : predicted) {
      if (p.category != g.category || p.kind != g.kind) continue;
      const double dx = p.x - g.x, dy = p.y - g.y;
      if (dx * dx + dy * dy <= radius * radius) {
        ++hit;
        break;
      }
    }
  }
  return static_cast<double>(hit) / static_cast<double>(truth.size());
}

// Detections and ground truth of one evaluated frame (input resolution).
struct FrameEval {
  std::vector<Detection> detections;
  std::vector<LabeledBox> truth;
};

struct CategoryReport {
  int category = 0;
  int num_gt = 0;
  std::optional<double> ap50;
  std::optional<double> ap75;
  std::vector<PrPoint> pr50;
  std::vector<PrPoint> pr75;
};

struct EvalReport {
  std::vector<CategoryReport> categories;
  double mean_ap50 = 0;
  double mean_ap75 = 0;
  double map = 0;  // (mean_ap50 + mean_ap75) / 2
  std::optional<double> pck_tl;
  std::optional<double> pck_br;
  double pck_radius = 0;
};

struct CategoryMatch {
  std::vector<double> scores;
  std::vector<bool> flags;
  int num_gt = 0;
};

// TP flags of one category over all frames, in descending score order.
inline CategoryMatch match_category(const std::vector<FrameEval>& frames, int category, double iou_threshold) {
  struct Item {
    double score;
    bool tp;
  };
  std::vector<Item> items;
  CategoryMatch m;
  for (const auto& f : frames) {
    std::vector<Detection> dets;
    std::vector<LabeledBox> gts;
    for (const auto& d : f.detections)
      if (d.category == category) dets.push_back(d);
    for (const auto& g : f.truth)
      if (g.category == category) gts.push_back(g);
    m.num_gt += static_cast<int>(gts.size());
    auto flags = match_detections(dets, gts, iou_threshold);
    for (std::size_t i = 0; i < dets.size(); ++i) items.push_back({dets[i].score, flags[i]});
  }
  std::stable_sort(items.begin(), items.end(), [](const Item& a, const Item& b) { return a.score > b.score; });
  for (const auto& it : items) {
    m.scores.push_back(it.score);
    m.flags.push_back(it.tp);
  }
  return m;
}

/// AP50/AP75 per category, their means over categories with ground truth,
/// mAP as the average of the two means, and box-corner PCK per corner kind.
/// `pck_radius` is in working-grid cells of `stride` input pixels.
inline EvalReport evaluate(const std::vector<FrameEval>& frames, int categories, double pck_radius = 1.0,
                           int stride = ModelConfig::kOutputStride) {
  EvalReport report;
  report.pck_radius = pck_radius;
  double sum50 = 0, sum75 = 0;
  int present = 0;
  for (int c = 0; c < categories; ++c) {
    CategoryReport cr;
    cr.category = c;
    auto m50 = match_category(frames, c, 0.5);
    auto m75 = match_category(frames, c, 0.75);
    cr.num_gt = m50.num_gt;
    cr.ap50 = average_precision(m50.flags, m50.num_gt);
    cr.ap75 = average_precision(m75.flags, m75.num_gt);
    cr.pr50 = pr_curve(m50.scores, m50.flags, m50.num_gt);
    cr.pr75 = pr_curve(m75.scores, m75.flags, m75.num_gt);
    if (cr.ap50) {
      sum50 += *cr.ap50;
      sum75 += *cr.ap75;
      ++present;
    }
    report.categories.push_back(std::move(cr));
  }
  if (present > 0) {
    report.mean_ap50 = sum50 / present;
    report.mean_ap75 = sum75 / present;
  }
  report.map = (report.mean_ap50 + report.mean_ap75) / 2.0;

  // Detection box corners vs ground-truth corners on the working grid. Frames
  // are kept apart by giving each frame its own block of category ids.
  const double cell = static_cast<double>(stride);
  std::vector<Corner> pred, truth;
  for (std::size_t fi = 0; fi < frames.size(); ++fi) {
    const int base = static_cast<int>(fi) * categories;
    for (const auto& d : frames[fi].detections) {
      const int c = base + d.category;
      pred.push_back({CornerKind::top_left, c, static_cast<int>(std::lround(d.box.x1 / cell)),
                      static_cast<int>(std::lround(d.box.y1 / cell)), d.score, 0});
      pred.push_back({CornerKind::bottom_right, c, static_cast<int>(std::lround(d.box.x2 / cell)),
                      static_cast<int>(std::lround(d.box.y2 / cell)), d.score, 0});
    }
    for (const auto& g : frames[fi].truth) {
      const int c = base + g.category;
      truth.push_back({CornerKind::top_left, c, static_cast<int>(std::lround(g.box.x1 / cell)),
                       static_cast<int>(std::lround(g.box.y1 / cell)), 1, 0});
      truth.push_back({CornerKind::bottom_right, c, static_cast<int>(std::lround(g.box.x2 / cell)),
                       static_cast<int>(std::lround(g.box.y2 / cell)), 1, 0});
    }
  }
  std::vector<Corner> truth_tl, truth_br;
  for (const auto& t : truth) (t.kind == CornerKind::top_left ? truth_tl : truth_br).push_back(t);
  report.pck_tl = corner_pck(pred, truth_tl, pck_radius);
  report.pck_br = corner_pck(pred, truth_br, pck_radius);
  return report;
}

inline nlohmann::json report_to_json(const EvalReport& r, const std::vector<std::string>& category_names = {}) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  nlohmann::json cats = nlohmann::json::array();
  for (const auto& c : r.categories) {
    nlohmann::json j{{"id", c.category}, {"num_gt", c.num_gt}, {"ap50", opt(c.ap50)}, {"ap75", opt(c.ap75)}};
    if (c.category < static_cast<int>(category_names.size())) j["name"] = category_names[c.category];
    if (!c.ap50) j["absent"] = true;
    cats.push_back(j);
  }
  return {{"categories", cats},   {"mean_ap50", r.mean_ap50}, {"mean_ap75", r.mean_ap75},
          {"map", r.map},         {"pck_tl", opt(r.pck_tl)},  {"pck_br", opt(r.pck_br)},
          {"pck_radius", r.pck_radius}};
}

inline void write_pr_csv(const std::string& path, const std::vector<PrPoint>& points) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write '" + path + "'");
  os.precision(17);
  os << "threshold,precision,recall\n";
  for (const auto& p : points) os << p.threshold << ',' << p.precision << ',' << p.recall << '\n';
}

}  // namespace gastkit
