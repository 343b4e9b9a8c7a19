#include <gtest/gtest.h>

#include <random>

#include "gastkit/eval_metrics.hpp"
#include "oracles.hpp"

using namespace gastkit;

namespace {

Detection det(Box b, double score, int category = 0) { return {b, category, score}; }

}  // namespace

TEST(MatchTest, Examples) {
  const Box g{0, 0, 10, 10};
  EXPECT_EQ(match_detections({det(g, 0.9)}, {{0, g}}, 0.5), (std::vector<bool>{true}));
  EXPECT_EQ(match_detections({det(g, 0.6), det(Box{0, 0, 10, 9}, 0.9)}, {{0, g}}, 0.5),
            (std::vector<bool>{false, true}));
  EXPECT_EQ(match_detections({det(g, 0.9, 1)}, {{0, g}}, 0.5), (std::vector<bool>{false}));
}

TEST(MatchTest, MixedInstanceMatchesExhaustiveVerification) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> c(0, 12), s(4, 10), score(0, 1);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<Detection> dets;
    std::vector<LabeledBox> gts;
    for (int i = 0; i < 3; ++i) {
      const double x = c(rng), y = c(rng);
      gts.push_back({static_cast<int>(rng() % 2), Box{x, y, x + s(rng), y + s(rng)}});
    }
    for (int i = 0; i < 5; ++i) {
      const auto& g = gts[rng() % 3];
      const double jx = c(rng) / 6 - 1, jy = c(rng) / 6 - 1;
      dets.push_back(det(Box{g.box.x1 + jx, g.box.y1 + jy, g.box.x2 + jx, g.box.y2 + jy}, score(rng),
                         rng() % 4 == 0 ? 1 - g.category : g.category));
    }
    for (double t : {0.5, 0.75}) {
      int solutions = 0;
      auto want = oracle::match_flags(dets, gts, t, &solutions);
      EXPECT_EQ(solutions, 1);
      EXPECT_EQ(match_detections(dets, gts, t), want) << "trial " << trial;
    }
  }
}

TEST(ApTest, Examples) {
  EXPECT_EQ(average_precision({true, true, true}, 3), 1.0);
  EXPECT_EQ(average_precision({false}, 1), 0.0);
  EXPECT_EQ(average_precision({true, false}, 2), 0.5);
  EXPECT_FALSE(average_precision({true}, 0).has_value());
}

TEST(ApTest, MatchesRankFormula) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = static_cast<int>(rng() % 12);
    std::vector<bool> flags(n);
    int tp = 0;
    for (int i = 0; i < n; ++i) tp += (flags[i] = rng() % 2);
    const int num_gt = tp + static_cast<int>(rng() % 4) + (tp == 0);
    EXPECT_NEAR(*average_precision(flags, num_gt), oracle::average_precision(flags, num_gt), 1e-12);
  }
}

TEST(ApTest, NonIncreasingWhenTruePositiveRelabeled) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<bool> flags(10);
    for (std::size_t i = 0; i < flags.size(); ++i) flags[i] = rng() % 2;
    const double before = *average_precision(flags, 8);
    for (std::size_t i = 0; i < flags.size(); ++i) {
      if (!flags[i]) continue;
      auto f = flags;
      f[i] = false;
      EXPECT_LE(*average_precision(f, 8), before + 1e-15);
    }
  }
}

TEST(ApTest, InvariantUnderMonotoneScoreRescaling) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0, 1), c(0, 30);
  std::vector<FrameEval> frames(4);
  for (auto& f : frames) {
    for (int i = 0; i < 3; ++i) {
      const double x = c(rng), y = c(rng);
      f.truth.push_back({i % 2, Box{x, y, x + 12, y + 14}});
      f.detections.push_back(det(Box{x + u(rng) * 3, y + u(rng) * 3, x + 12, y + 14}, u(rng), i % 2));
      f.detections.push_back(det(Box{x, y, x + 4, y + 4}, u(rng), i % 2));
    }
  }
  auto a = evaluate(frames, 2);
  for (auto& f : frames)
    for (auto& d : f.detections) d.score = std::exp(3 * d.score) / 50;
  auto b = evaluate(frames, 2);
  EXPECT_EQ(a.map, b.map);
  EXPECT_EQ(a.mean_ap50, b.mean_ap50);
}

TEST(PckTest, Examples) {
  std::vector<Corner> truth{{CornerKind::top_left, 0, 3, 4, 1, 0}, {CornerKind::bottom_right, 0, 9, 9, 1, 0}};
  EXPECT_EQ(*corner_pck(truth, truth, 1.0), 1.0);
  EXPECT_EQ(*corner_pck({}, truth, 1.0), 0.0);
  EXPECT_FALSE(corner_pck(truth, {}, 1.0).has_value());
  EXPECT_THROW(corner_pck(truth, truth, 0.0), ContractError);
  std::vector<Corner> wrong_kind{{CornerKind::bottom_right, 0, 3, 4, 1, 0}};
  EXPECT_EQ(*corner_pck(wrong_kind, {truth[0]}, 1.0), 0.0);
}

TEST(PckTest, MatchesDoubleLoop) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> p(0, 9);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Corner> pred, truth;
    auto make = [&] {
      return Corner{rng() % 2 ? CornerKind::top_left : CornerKind::bottom_right, static_cast<int>(rng() % 2), p(rng),
                    p(rng), 0.5, 0};
    };
    for (int i = 1 + static_cast<int>(rng() % 6); i > 0; --i) truth.push_back(make());
    for (int i = static_cast<int>(rng() % 8); i > 0; --i) pred.push_back(make());
    const double radius = 0.5 + static_cast<double>(rng() % 4);
    EXPECT_NEAR(*corner_pck(pred, truth, radius), oracle::pck(pred, truth, radius), 1e-12);
  }
}

TEST(EvaluateTest, PerfectAndEmptyDetections) {
  std::vector<FrameEval> frames(3);
  for (int i = 0; i < 3; ++i) {
    frames[i].truth = {{0, Box{4.0 * i, 8, 4.0 * i + 20, 30}}, {1, Box{50, 10, 90, 40}}};
    for (const auto& t : frames[i].truth) frames[i].detections.push_back(det(t.box, 0.9, t.category));
  }
  auto perfect = evaluate(frames, 2);
  EXPECT_EQ(perfect.map, 1.0);
  EXPECT_EQ(*perfect.pck_tl, 1.0);
  for (auto& f : frames) f.detections.clear();
  auto empty = evaluate(frames, 2);
  EXPECT_EQ(empty.map, 0.0);
  EXPECT_EQ(*empty.pck_br, 0.0);
}

TEST(EvaluateTest, AbsentCategoryExcludedAndMapIdentity) {
  std::vector<FrameEval> frames(1);
  frames[0].truth = {{0, Box{0, 0, 20, 20}}, {0, Box{40, 0, 60, 20}}};
  frames[0].detections = {det(Box{0, 0, 20, 18}, 0.9), det(Box{40, 0, 60, 14}, 0.8), det(Box{0, 0, 5, 5}, 0.7, 2)};
  auto r = evaluate(frames, 3);
  EXPECT_FALSE(r.categories[1].ap50.has_value());
  EXPECT_FALSE(r.categories[2].ap50.has_value());
  EXPECT_EQ(r.mean_ap50, 1.0);
  EXPECT_EQ(r.mean_ap75, 0.5);
  EXPECT_EQ(r.map, (r.mean_ap50 + r.mean_ap75) / 2);
  auto j = report_to_json(r, {"a", "b", "c"});
  EXPECT_TRUE(j["categories"][1]["absent"].get<bool>());
}
