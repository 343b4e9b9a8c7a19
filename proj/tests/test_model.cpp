#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>
#include <set>

#include "gastkit/model.hpp"
#include "gradcheck.hpp"

using namespace gastkit;
using gastkit::testing::check_gradients;
using gastkit::testing::NamedInput;
using gastkit::testing::random_tensor;
using gastkit::testing::weighted_sum;

namespace {

ModelConfig small_config(int t = 2, int categories = 2) {
  ModelConfig c;
  c.clip_len = t;
  c.categories = categories;
  c.input_height = 16;
  c.input_width = 16;
  c.base_channels = 4;
  c.fused_channels = 8;
  return c;
}

Tensor<double> prior_input(const ModelConfig& c, std::mt19937_64& rng) {
  return random_tensor({2 + c.categories, c.working_height(), c.working_width()}, rng, 0, 1);
}

std::vector<NamedInput> parameters_of(GastNet<double>& net) {
  std::vector<NamedInput> out;
  for (const auto& p : net.store().parameters()) out.push_back({p.name, p.tensor});
  return out;
}

// Scalar readout covering every head output of a CornerFieldSet.
Tensor<double> readout(const CornerFieldSet<double>& f) {
  Tensor<double> acc;
  std::uint64_t seed = 100;
  for (auto s : kFrameSlots)
    for (auto k : kCornerKinds) {
      auto term = add(weighted_sum(f.heatmap(s, k), seed), weighted_sum(f.embedding(s, k), seed + 1));
      seed += 2;
      acc = acc.defined() ? add(acc, term) : term;
    }
  return acc;
}

}  // namespace

TEST(ModelTest, BackboneShapes) {
  auto cfg = small_config(4);
  cfg.fused_channels = 64;
  GastNet<float> net(cfg, 1);
  std::mt19937_64 rng(1);
  auto clip = Tensor<float>::full({3, 4, 16, 16}, 0.5f);
  auto feats = net.backbone_forward(clip);
  ASSERT_EQ(static_cast<int>(feats.size()), cfg.scales);
  for (const auto& f : feats) EXPECT_EQ(f.shape(), (Shape{64, 4, 4, 4}));
}

TEST(ModelTest, IndivisibleInputRejectedBeforeCompute) {
  auto cfg = small_config();
  cfg.input_height = 20;
  EXPECT_THROW(GastNet<float>(cfg, 1), ContractError);
  GastNet<float> net(small_config(), 1);
  EXPECT_THROW(net.backbone_forward(Tensor<float>::zeros({3, 2, 20, 16})), ContractError);
  EXPECT_THROW(net.backbone_forward(Tensor<float>::zeros({3, 3, 16, 16})), ContractError);
}

TEST(ModelTest, SingleFrameConfigIsFinite) {
  auto cfg = small_config(4);
  cfg.use_multi_frame = false;
  cfg.use_geometry_fusion = false;
  cfg.use_geometry_prediction = false;
  EXPECT_EQ(cfg.frames(), 1);
  GastNet<float> net(cfg, 2);
  std::mt19937_64 rng(2);
  auto clip = Tensor<float>::full({3, 1, 16, 16}, 0.3f);
  auto out = net.forward(clip, nullptr);
  for (auto s : kFrameSlots)
    for (auto k : kCornerKinds)
      for (float v : out.heatmap(s, k).data()) EXPECT_TRUE(std::isfinite(v));
}

TEST(ModelTest, FuseScalesUniformAndOneHot) {
  auto cfg = small_config();
  GastNet<double> net(cfg, 3);
  std::mt19937_64 rng(3);
  std::vector<Tensor<double>> feats;
  for (int i = 0; i < 3; ++i) feats.push_back(random_tensor({8, 2, 4, 4}, rng));
  auto mean_fused = net.fuse_scales(feats, nullptr);
  auto uniform = Tensor<double>::full({3, 4, 4}, 1.0 / 3.0);
  auto att_fused = net.fuse_scales(feats, &uniform);
  for (std::int64_t i = 0; i < mean_fused.numel(); ++i) {
    const double m = (feats[0].data()[i] + feats[1].data()[i] + feats[2].data()[i]) / 3.0;
    EXPECT_NEAR(mean_fused.data()[i], m, 1e-12);
    EXPECT_NEAR(att_fused.data()[i], m, 1e-12);
  }
  for (int k = 0; k < 3; ++k) {
    auto onehot = Tensor<double>::zeros({3, 4, 4});
    for (int p = 0; p < 16; ++p) onehot.mutable_data()[k * 16 + p] = 1.0;
    auto f = net.fuse_scales(feats, &onehot);
    for (std::int64_t i = 0; i < f.numel(); ++i) EXPECT_EQ(f.data()[i], feats[k].data()[i]);
  }
  auto bad = Tensor<double>::zeros({2, 4, 4});
  EXPECT_THROW(net.fuse_scales(feats, &bad), ContractError);
  feats.pop_back();
  EXPECT_THROW(net.fuse_scales(feats, nullptr), ContractError);
}

TEST(ModelTest, ProjectFramesShapesAndSingleFrameSymmetry) {
  auto cfg = small_config(1);
  cfg.use_multi_frame = false;
  GastNet<double> net(cfg, 4);
  std::mt19937_64 rng(4);
  auto fused = random_tensor({8, 1, 4, 4}, rng);
  auto [first, last] = net.project_frames(fused);
  EXPECT_EQ(first.shape(), (Shape{8, 4, 4}));
  EXPECT_EQ(last.shape(), (Shape{8, 4, 4}));
  EXPECT_NE(std::vector<double>(first.data().begin(), first.data().end()),
            std::vector<double>(last.data().begin(), last.data().end()));
  std::map<std::string, Tensor<double>> by_name;
  for (const auto& p : net.store().all()) by_name[p.name] = p.tensor;
  for (auto& [name, t] : by_name) {
    const std::string prefix = "frames.first.";
    if (name.rfind(prefix, 0) != 0) continue;
    auto dst = by_name.at("frames.last." + name.substr(prefix.size())).mutable_data();
    std::copy(t.data().begin(), t.data().end(), dst.begin());
  }
  auto [first2, last2] = net.project_frames(fused);
  EXPECT_EQ(std::vector<double>(first2.data().begin(), first2.data().end()),
            std::vector<double>(last2.data().begin(), last2.data().end()));
}

TEST(ModelTest, HeadInputChannelsFollowToggle) {
  auto cfg = small_config();
  cfg.fused_channels = 64;
  cfg.use_geometry_prediction = false;
  EXPECT_EQ(GastNet<float>(cfg, 1).head_input_channels(), 64);
  cfg.use_geometry_prediction = true;
  EXPECT_EQ(GastNet<float>(cfg, 1).head_input_channels(), 80);
}

TEST(ModelTest, ZeroWeightHeadsGiveOneHalf) {
  auto cfg = small_config();
  GastNet<float> net(cfg, 5);
  for (auto s : kFrameSlots)
    for (auto k : kCornerKinds) {
      for (auto& v : net.head(s, k).weight.mutable_data()) v = 0;
      for (auto& v : net.head(s, k).bias.mutable_data()) v = 0;
    }
  std::mt19937_64 rng(5);
  GeometryInput<float> geo(Tensor<float>::full({4, 4, 4}, 0.5f));
  auto out = net.forward(Tensor<float>::full({3, 2, 16, 16}, 0.2f), &geo);
  for (auto s : kFrameSlots)
    for (auto k : kCornerKinds) {
      EXPECT_EQ(out.heatmap(s, k).shape(), (Shape{2, 4, 4}));
      EXPECT_EQ(out.embedding(s, k).shape(), (Shape{1, 4, 4}));
      for (float v : out.heatmap(s, k).data()) EXPECT_EQ(v, 0.5f);
    }
}

TEST(ModelTest, FourHeadsAreParameterDisjoint) {
  GastNet<float> net(small_config(), 6);
  std::set<const void*> seen;
  int heads = 0;
  for (auto s : kFrameSlots)
    for (auto k : kCornerKinds) {
      ++heads;
      EXPECT_TRUE(seen.insert(net.head(s, k).weight.node().get()).second);
      EXPECT_TRUE(seen.insert(net.head(s, k).bias.node().get()).second);
    }
  EXPECT_EQ(heads, 4);
  std::set<std::string> names;
  for (const auto& p : net.store().all()) EXPECT_TRUE(names.insert(p.name).second) << p.name;
}

TEST(ModelTest, GeometryNeverReadWhenTogglesOff) {
  auto cfg = small_config();
  cfg.use_geometry_fusion = false;
  cfg.use_geometry_prediction = false;
  GastNet<float> net(cfg, 7);
  GeometryInput<float> geo(Tensor<float>::full({4, 4, 4}, 0.5f));
  net.forward(Tensor<float>::full({3, 2, 16, 16}, 0.2f), &geo);
  EXPECT_EQ(geo.reads(), 0);
  auto full = small_config();
  GastNet<float> net2(full, 7);
  net2.forward(Tensor<float>::full({3, 2, 16, 16}, 0.2f), &geo);
  EXPECT_GT(geo.reads(), 0);
  EXPECT_THROW(net2.forward(Tensor<float>::full({3, 2, 16, 16}, 0.2f), nullptr), ContractError);
}

TEST(ModelTest, ForwardFiniteAcrossSeededTrials) {
  auto cfg = small_config(4);
  GastNet<float> net(cfg, 8);
  std::mt19937_64 rng(8);
  std::normal_distribution<float> noise(0.0f, 3.0f);
  for (int trial = 0; trial < 1000; ++trial) {
    net.set_training(trial % 2 == 0);
    std::vector<float> clip(3 * 4 * 16 * 16), prior(4 * 4 * 4);
    for (auto& v : clip) v = noise(rng);
    for (auto& v : prior) v = noise(rng);
    GeometryInput<float> geo(Tensor<float>::from_data({4, 4, 4}, prior));
    NoGradGuard no_grad;
    auto out = net.forward(Tensor<float>::from_data({3, 4, 16, 16}, clip), &geo);
    for (auto s : kFrameSlots)
      for (auto k : kCornerKinds) {
        for (float v : out.heatmap(s, k).data()) ASSERT_TRUE(std::isfinite(v) && v >= 0 && v <= 1) << trial;
        for (float v : out.embedding(s, k).data()) ASSERT_TRUE(std::isfinite(v)) << trial;
      }
  }
}

TEST(ModelTest, BackboneGradient) {
  auto cfg = small_config(2);
  GastNet<double> net(cfg, 9);
  std::mt19937_64 rng(9);
  auto clip = random_tensor({3, 2, 16, 16}, rng);
  auto inputs = parameters_of(net);
  inputs.push_back({"clip", clip});
  auto rep = check_gradients(
      [&] {
        auto f = net.backbone_forward(clip);
        return add(add(weighted_sum(f[0], 1), weighted_sum(f[1], 2)), weighted_sum(f[2], 3));
      },
      inputs, rng, 3);
  EXPECT_LT(rep.max_rel_error, 1e-4) << rep.worst;
}

TEST(ModelTest, FuseAndProjectGradient) {
  auto cfg = small_config(2);
  GastNet<double> net(cfg, 10);
  std::mt19937_64 rng(10);
  std::vector<Tensor<double>> feats;
  std::vector<NamedInput> inputs = parameters_of(net);
  for (int i = 0; i < 3; ++i) {
    feats.push_back(random_tensor({8, 2, 4, 4}, rng));
    inputs.push_back({"feature" + std::to_string(i), feats.back()});
  }
  auto att = random_tensor({3, 4, 4}, rng);
  inputs.push_back({"attention", att});
  auto rep = check_gradients(
      [&] {
        auto [a, b] = net.project_frames(net.fuse_scales(feats, &att));
        return add(weighted_sum(a, 1), weighted_sum(b, 2));
      },
      inputs, rng, 4);
  EXPECT_LT(rep.max_rel_error, 1e-4) << rep.worst;
}

TEST(ModelTest, FullForwardGradient) {
  auto cfg = small_config(2);
  GastNet<double> net(cfg, 11);
  std::mt19937_64 rng(11);
  auto clip = random_tensor({3, 2, 16, 16}, rng);
  GeometryInput<double> geo(prior_input(cfg, rng));
  auto inputs = parameters_of(net);
  inputs.push_back({"clip", clip});
  auto rep = check_gradients([&] { return readout(net.forward(clip, &geo)); }, inputs, rng, 3);
  EXPECT_LT(rep.max_rel_error, 1e-4) << rep.worst;
  EXPECT_GT(rep.checked, 100);
}
