#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "gastkit/losses.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"

using namespace gastkit;
using gastkit::testing::check_gradients;
using gastkit::testing::random_tensor;

namespace {

using T = Tensor<double>;

T vec(std::vector<double> v) {
  const auto n = static_cast<std::int64_t>(v.size());
  return T::from_data({n}, std::move(v));
}

CornerFieldSet<double> constant_fields(int n, int h, int w, double p, double e) {
  CornerFieldSet<double> f;
  for (int s = 0; s < 2; ++s)
    for (int k = 0; k < 2; ++k) {
      f.heatmaps[s][k] = T::full({n, h, w}, p, true);
      f.embeddings[s][k] = T::full({1, h, w}, e, true);
    }
  return f;
}

}  // namespace

TEST(TargetsTest, ExactCornerIsOne) {
  std::vector<LabeledBox> boxes{{1, Box{8, 12, 40, 44}}};
  auto t = make_targets(boxes, 2, 24, 36, 4);
  ASSERT_EQ(t.objects.size(), 1u);
  EXPECT_EQ(t.objects[0].tl_x, 2);
  EXPECT_EQ(t.objects[0].tl_y, 3);
  EXPECT_EQ(t.objects[0].br_x, 10);
  EXPECT_EQ(t.objects[0].br_y, 11);
  EXPECT_EQ(t.tl[1 * 24 * 36 + 3 * 36 + 2], 1.0);
  EXPECT_EQ(t.br[1 * 24 * 36 + 11 * 36 + 10], 1.0);
  EXPECT_EQ(t.tl[3 * 36 + 2], 0.0);
  for (double v : t.tl) EXPECT_TRUE(v >= 0 && v <= 1);
}

TEST(TargetsTest, OverlappingGaussiansTakeMaximum) {
  std::vector<LabeledBox> a{{0, Box{0, 0, 40, 40}}}, b{{0, Box{8, 4, 48, 44}}}, both{a[0], b[0]};
  auto ta = make_targets(a, 1, 24, 24, 4), tb = make_targets(b, 1, 24, 24, 4), tab = make_targets(both, 1, 24, 24, 4);
  for (std::size_t i = 0; i < tab.tl.size(); ++i) EXPECT_EQ(tab.tl[i], std::max(ta.tl[i], tb.tl[i]));
}

TEST(TargetsTest, DegenerateBoxSkippedWithWarning) {
  std::vector<std::string> warnings;
  ScopedWarningSink sink([&](const std::string& m) { warnings.push_back(m); });
  std::vector<LabeledBox> boxes{{0, Box{4, 4, 4, 20}}};
  auto t = make_targets(boxes, 1, 8, 8, 4);
  EXPECT_TRUE(t.objects.empty());
  EXPECT_EQ(warnings.size(), 1u);
}

TEST(TargetsTest, RadiusMatchesExhaustiveDisplacementSearch) {
  EXPECT_EQ(gaussian_radius(40, 40, 0.3), oracle::gaussian_radius(40, 40, 0.3));
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> side(1.0, 14.0);
  for (int i = 0; i < 40; ++i) {
    const double w = side(rng), h = side(rng);
    EXPECT_EQ(gaussian_radius(w, h, 0.3), oracle::gaussian_radius(w, h, 0.3)) << w << "x" << h;
  }
}

TEST(FocalLossTest, PerfectPredictionApproachesZero) {
  std::vector<double> y{1, 0.5, 0, 0};
  auto loss = focal_loss(vec({1 - 1e-9, 1e-9, 1e-9, 1e-9}), y);
  EXPECT_LT(loss.item(), 1e-3);
}

TEST(FocalLossTest, DirectSubstitution) {
  auto loss = focal_loss(vec({0.5}), std::vector<double>{1.0});
  EXPECT_NEAR(loss.item(), 0.25 * std::log(2.0), 1e-15);
}

TEST(FocalLossTest, MatchesScalarLoop) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.001, 0.999);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> p(60), y(60);
    for (auto& v : p) v = u(rng);
    for (auto& v : y) v = rng() % 5 == 0 ? 1.0 : (rng() % 2 ? u(rng) : 0.0);
    EXPECT_NEAR(focal_loss(vec(p), y).item(), oracle::focal_loss(p, y, 2, 4), 1e-6);
  }
}

TEST(FocalLossTest, Gradient) {
  std::mt19937_64 rng(3);
  auto p = random_tensor({2, 4, 5}, rng, 0.05, 0.95);
  std::vector<double> y(40);
  std::uniform_real_distribution<double> u(0, 1);
  for (auto& v : y) v = rng() % 6 == 0 ? 1.0 : u(rng);
  auto rep = check_gradients([&] { return focal_loss(p, y); }, {{"p", p}}, rng, 40);
  EXPECT_LT(rep.max_rel_error, 1e-4) << rep.worst;
}

TEST(PullPushTest, EqualEmbeddingsHaveZeroPull) {
  EXPECT_EQ(pull_loss(vec({0.3, -1.2}), vec({0.3, -1.2})).item(), 0.0);
}

TEST(PullPushTest, IdenticalMeansGiveUnitPush) {
  EXPECT_EQ(push_loss(vec({0.2, 0.7}), vec({0.6, 0.1}), 1.0).item(), 1.0);
  EXPECT_EQ(push_loss(vec({0.2}), vec({0.6}), 1.0).item(), 0.0);
}

TEST(PullPushTest, MatchesPairwiseLoop) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  for (int trial = 0; trial < 100; ++trial) {
    const int k = 1 + trial % 6;
    std::vector<double> a(k), b(k);
    for (auto& v : a) v = u(rng);
    for (auto& v : b) v = u(rng);
    EXPECT_NEAR(pull_loss(vec(a), vec(b)).item(), oracle::pull_loss(a, b), 1e-6);
    EXPECT_NEAR(push_loss(vec(a), vec(b), 1.0).item(), oracle::push_loss(a, b, 1.0), 1e-6);
  }
}

TEST(PullPushTest, PermutationInvariant) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> a(5), b(5);
  for (auto& v : a) v = u(rng);
  for (auto& v : b) v = u(rng);
  std::vector<int> perm{3, 0, 4, 1, 2};
  std::vector<double> pa, pb;
  for (int i : perm) {
    pa.push_back(a[i]);
    pb.push_back(b[i]);
  }
  EXPECT_NEAR(pull_loss(vec(a), vec(b)).item(), pull_loss(vec(pa), vec(pb)).item(), 1e-15);
  EXPECT_NEAR(push_loss(vec(a), vec(b), 1.0).item(), push_loss(vec(pa), vec(pb), 1.0).item(), 1e-15);
}

TEST(PullPushTest, Gradients) {
  std::mt19937_64 rng(6);
  auto a = random_tensor({4}, rng, -2, 2), b = random_tensor({4}, rng, -2, 2);
  auto rp = check_gradients([&] { return pull_loss(a, b); }, {{"tl", a}, {"br", b}}, rng, 4);
  auto rq = check_gradients([&] { return push_loss(a, b, 1.0); }, {{"tl", a}, {"br", b}}, rng, 4);
  EXPECT_LT(rp.max_rel_error, 1e-4) << rp.worst;
  EXPECT_LT(rq.max_rel_error, 1e-4) << rq.worst;
}

TEST(PullPushTest, ZeroObjectsGiveZero) {
  auto e = T::full({1, 4, 4}, 0.5, true);
  auto pp = pull_push_loss(e, e, std::vector<CornerTarget>{});
  EXPECT_EQ(pp.pull.item(), 0.0);
  EXPECT_EQ(pp.push.item(), 0.0);
}

TEST(TotalLossTest, ZeroObjectsIsBackgroundFocal) {
  auto f = constant_fields(2, 4, 4, 0.3, 0.0);
  auto empty = make_targets(std::vector<LabeledBox>{}, 2, 4, 4, 4);
  auto terms = total_loss(f, empty, empty, LossConfig{});
  const double per_map = -32 * std::pow(0.3, 2) * std::log(0.7);
  EXPECT_NEAR(terms.total.item(), 4 * per_map, 1e-9);
  EXPECT_EQ(terms.pull, 0.0);
  EXPECT_EQ(terms.push, 0.0);
}

TEST(TotalLossTest, FocalOnlyWeights) {
  std::mt19937_64 rng(7);
  CornerFieldSet<double> f;
  for (int s = 0; s < 2; ++s)
    for (int k = 0; k < 2; ++k) {
      f.heatmaps[s][k] = random_tensor({2, 6, 6}, rng, 0.05, 0.95);
      f.embeddings[s][k] = random_tensor({1, 6, 6}, rng);
    }
  std::vector<LabeledBox> boxes{{0, Box{2, 2, 14, 18}}, {1, Box{4, 6, 20, 22}}};
  auto t = make_targets(boxes, 2, 6, 6, 4);
  LossConfig cfg;
  cfg.w_pull = 0;
  cfg.w_push = 0;
  auto terms = total_loss(f, t, t, cfg);
  EXPECT_NEAR(terms.total.item(), terms.focal, 1e-12);
  EXPECT_GT(terms.pull + terms.push, 0.0);
  cfg.w_focal = -1;
  EXPECT_THROW(total_loss(f, t, t, cfg), ContractError);
}

TEST(TotalLossTest, HeadWeightGradient) {
  std::mt19937_64 rng(8);
  auto feat = random_tensor({3, 6, 6}, rng);
  auto w = random_tensor({3, 3, 3, 3}, rng, -0.3, 0.3), b = random_tensor({3}, rng);
  std::vector<LabeledBox> boxes{{0, Box{2, 2, 14, 18}}, {1, Box{4, 6, 20, 22}}, {0, Box{8, 1, 23, 12}}};
  auto t = make_targets(boxes, 2, 6, 6, 4);
  auto f = [&] {
    auto logits = conv2d(feat, w, b, 1, 1);
    CornerFieldSet<double> fs;
    for (int s = 0; s < 2; ++s)
      for (int k = 0; k < 2; ++k) {
        fs.heatmaps[s][k] = sigmoid(slice(logits, 0, 0, 2));
        fs.embeddings[s][k] = slice(logits, 0, 2, 1);
      }
    return total_loss(fs, t, t, LossConfig{}).total;
  };
  auto rep = check_gradients(f, {{"w", w}, {"b", b}}, rng, 30);
  EXPECT_LT(rep.max_rel_error, 1e-4) << rep.worst;
}
