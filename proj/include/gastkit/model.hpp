#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "gastkit/geometry_prior.hpp"
#include "gastkit/nn.hpp"

namespace gastkit {

enum class FrameSlot { first = 0, last = 1 };
enum class CornerKind { top_left = 0, bottom_right = 1 };

inline const char* slot_name(FrameSlot s) { return s == FrameSlot::first ? "first" : "last"; }
inline const char* kind_name(CornerKind k) { return k == CornerKind::top_left ? "tl" : "br"; }

inline constexpr std::array<FrameSlot, 2> kFrameSlots{FrameSlot::first, FrameSlot::last};
inline constexpr std::array<CornerKind, 2> kCornerKinds{CornerKind::top_left, CornerKind::bottom_right};

struct ModelConfig {
  static constexpr int kOutputStride = 4;

  int clip_len = 4;
  int categories = 2;
  int input_height = 96;
  int input_width = 144;
  int scales = 3;
  int base_channels = 16;
  int fused_channels = 64;
  bool use_multi_frame = true;
  bool use_geometry_prediction = true;
  bool use_geometry_fusion = true;

  // Frames per clip actually fed to the network (1 for the single-frame baseline).
  int frames() const { return use_multi_frame ? clip_len : 1; }
  int working_height() const { return input_height / kOutputStride; }
  int working_width() const { return input_width / kOutputStride; }
  bool uses_geometry() const { return use_geometry_prediction || use_geometry_fusion; }
  int geometry_pred_channels() const { return fused_channels / 4; }

  void validate() const {
    if (categories < 1) throw ContractError("ModelConfig: categories must be >= 1");
    if (scales < 2) throw ContractError("ModelConfig: scales must be >= 2");
    if (use_multi_frame && clip_len < 2) throw ContractError("ModelConfig: multi-frame model needs clip_len >= 2");
    if (clip_len < 1) throw ContractError("ModelConfig: clip_len must be >= 1");
    if (base_channels < 1 || fused_channels < 4 || fused_channels % 4 != 0) {
      throw ContractError("ModelConfig: fused_channels must be a positive multiple of 4");
    }
    const int div = 1 << (scales + 1);
    if (input_height % div != 0 || input_width % div != 0) {
      throw ContractError("ModelConfig: input " + std::to_string(input_height) + "x" + std::to_string(input_width) +
                          " must be divisible by " + std::to_string(div));
    }
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Heatmaps [N,H',W'] (sigmoid outputs) and embeddings [1,H',W'] for each
/// (frame slot, corner kind) pair.
template <typename Real>
struct CornerFieldSet {
  std::array<std::array<Tensor<Real>, 2>, 2> heatmaps;
  std::array<std::array<Tensor<Real>, 2>, 2> embeddings;

  const Tensor<Real>& heatmap(FrameSlot s, CornerKind k) const {
    return heatmaps[static_cast<int>(s)][static_cast<int>(k)];
  }
  const Tensor<Real>& embedding(FrameSlot s, CornerKind k) const {
    return embeddings[static_cast<int>(s)][static_cast<int>(k)];
  }
};

// Geometry network input with a read counter, so tests can prove which
// configurations consult the prior.
template <typename Real>
class GeometryInput {
 public:
  explicit GeometryInput(Tensor<Real> input) : input_(std::move(input)) {}
  const Tensor<Real>& tensor() const {
    reads_.fetch_add(1, std::memory_order_relaxed);
    return input_;
  }
  int reads() const { return reads_.load(); }

 private:
  Tensor<Real> input_;
  mutable std::atomic<int> reads_{0};
};

/// Spatio-temporal corner network: 3D-conv backbone, geometry-guided fusion of
/// multi-scale features, first/last frame projections, and four corner heads.
template <typename Real>
class GastNet {
 public:
  static constexpr double kHeatmapPriorBias = -2.19;  // sigmoid ~= 0.1

  GastNet(const ModelConfig& config, std::uint64_t seed) : config_(config) {
    config_.validate();
    std::mt19937_64 rng(seed);
    const int c = config_.fused_channels;
    std::int64_t cin = 3;
    for (int i = 0; i < config_.scales; ++i) {
      const std::int64_t width = static_cast<std::int64_t>(config_.base_channels) << i;
      const std::string prefix = "backbone.stage" + std::to_string(i + 1);
      stage_conv_.push_back(Conv3d<Real>::create(store_, prefix + ".conv", cin, width, {3, 3, 3}, {1, 1, 1},
                                                 {1, 1, 1}, rng));
      stage_bn_.push_back(BatchNorm<Real>::create(store_, prefix + ".bn", width));
      stage_proj_.push_back(Conv3d<Real>::create(store_, prefix + ".proj", width, c, {1, 1, 1}, {1, 1, 1},
                                                 {0, 0, 0}, rng));
      cin = width;
    }
    if (config_.uses_geometry()) {
      geometry_ = GeometryEncoder<Real>::create(store_, "geometry", config_.categories, config_.scales,
                                                config_.geometry_pred_channels(), rng);
    }
    for (auto slot : kFrameSlots) {
      const std::string prefix = std::string("frames.") + slot_name(slot);
      frame_conv_[static_cast<int>(slot)] = Conv2d<Real>::create(store_, prefix + ".conv", 2 * c, c, 3, rng);
      frame_bn_[static_cast<int>(slot)] = BatchNorm<Real>::create(store_, prefix + ".bn", c);
    }
    const int head_in = head_input_channels();
    std::normal_distribution<double> head_init(0.0, 0.01);
    for (auto slot : kFrameSlots) {
      for (auto kind : kCornerKinds) {
        const std::string name = std::string("heads.") + slot_name(slot) + "_" + kind_name(kind);
        std::vector<Real> w(static_cast<std::size_t>(config_.categories + 1) * head_in * 9);
        for (auto& v : w) v = static_cast<Real>(head_init(rng));
        std::vector<Real> b(config_.categories + 1, static_cast<Real>(kHeatmapPriorBias));
        b.back() = 0;
        Conv2d<Real> head;
        head.weight = store_.add_parameter(
            name + ".weight", Tensor<Real>::from_data({config_.categories + 1, head_in, 3, 3}, std::move(w)));
        head.bias = store_.add_parameter(name + ".bias", Tensor<Real>::from_data({config_.categories + 1}, std::move(b)));
        head.padding = 1;
        heads_[static_cast<int>(slot)][static_cast<int>(kind)] = head;
      }
    }
  }

  GastNet(const GastNet&) = delete;
  GastNet& operator=(const GastNet&) = delete;

  const ModelConfig& config() const { return config_; }
  ParameterStore<Real>& store() { return store_; }
  const ParameterStore<Real>& store() const { return store_; }
  void set_training(bool on) { training_ = on; }
  bool training() const { return training_; }
  int head_input_channels() const {
    return config_.fused_channels + (config_.use_geometry_prediction ? config_.geometry_pred_channels() : 0);
  }
  Conv2d<Real>& head(FrameSlot s, CornerKind k) { return heads_[static_cast<int>(s)][static_cast<int>(k)]; }
  GeometryEncoder<Real>& geometry_encoder() { return geometry_; }

  // S feature maps [C, T, H/4, W/4], one per backbone stage.
  std::vector<Tensor<Real>> backbone_forward(const Tensor<Real>& clip) {
    check_clip(clip);
    const std::int64_t wh = clip.dim(2) / ModelConfig::kOutputStride;
    const std::int64_t ww = clip.dim(3) / ModelConfig::kOutputStride;
    std::vector<Tensor<Real>> features;
    Tensor<Real> x = clip;
    for (int i = 0; i < config_.scales; ++i) {
      x = maxpool3d(relu(stage_bn_[i](stage_conv_[i](x), training_)), 1, 2, 2);
      const int stride = 2 << i;
      if (stride <= ModelConfig::kOutputStride) {
        features.push_back(stage_proj_[i](resize_bilinear(x, wh, ww)));
      } else {
        features.push_back(resize_bilinear(stage_proj_[i](x), wh, ww));
      }
    }
    return features;
  }

  // Weighted sum of scale features; uniform weights when no attention is given.
  Tensor<Real> fuse_scales(const std::vector<Tensor<Real>>& features, const Tensor<Real>* attention) const {
    if (static_cast<int>(features.size()) != config_.scales) {
      throw ContractError("fuse_scales: expected " + std::to_string(config_.scales) + " scale features, got " +
                          std::to_string(features.size()));
    }
    if (!attention) {
      Tensor<Real> acc = features[0];
      for (std::size_t i = 1; i < features.size(); ++i) acc = add(acc, features[i]);
      return scale(acc, Real(1) / static_cast<Real>(features.size()));
    }
    if (attention->rank() != 3 || attention->dim(0) != config_.scales) {
      throw ContractError("fuse_scales: attention must be [S,H',W'] with S=" + std::to_string(config_.scales) +
                          ", got " + shape_str(attention->shape()));
    }
    const std::int64_t h = attention->dim(1), w = attention->dim(2);
    Tensor<Real> acc;
    for (int i = 0; i < config_.scales; ++i) {
      auto a = reshape(slice(*attention, 0, i, 1), {1, 1, h, w});
      auto term = mul(features[i], a);
      acc = i == 0 ? term : add(acc, term);
    }
    return acc;
  }

  // (F_first, F_last), each [C, H', W'] from concat(anchor frame slice, temporal mean).
  std::pair<Tensor<Real>, Tensor<Real>> project_frames(const Tensor<Real>& fused) {
    const std::int64_t t = fused.dim(1);
    auto context = mean_axis(fused, 1);
    auto project = [&](FrameSlot slot, std::int64_t index) {
      const int s = static_cast<int>(slot);
      auto x = concat<Real>({select(fused, 1, index), context}, 0);
      return relu(frame_bn_[s](frame_conv_[s](x), training_));
    };
    return {project(FrameSlot::first, 0), project(FrameSlot::last, t - 1)};
  }

  CornerFieldSet<Real> predict_corners(const Tensor<Real>& f_first, const Tensor<Real>& f_last,
                                       const Tensor<Real>* geometry_features) {
    if (config_.use_geometry_prediction && !geometry_features) {
      throw ContractError("predict_corners: geometry features required when use_geometry_prediction is set");
    }
    CornerFieldSet<Real> out;
    const std::int64_t n = config_.categories;
    for (auto slot : kFrameSlots) {
      Tensor<Real> x = slot == FrameSlot::first ? f_first : f_last;
      if (config_.use_geometry_prediction) x = concat<Real>({x, *geometry_features}, 0);
      for (auto kind : kCornerKinds) {
        auto logits = head(slot, kind)(x);
        out.heatmaps[static_cast<int>(slot)][static_cast<int>(kind)] = sigmoid(slice(logits, 0, 0, n));
        out.embeddings[static_cast<int>(slot)][static_cast<int>(kind)] = slice(logits, 0, n, 1);
      }
    }
    return out;
  }

  /// Full forward pass. `geometry` may be null when both geometry toggles are off;
  /// in that configuration it is never read.
  CornerFieldSet<Real> forward(const Tensor<Real>& clip, const GeometryInput<Real>* geometry) {
    check_clip(clip);
    Tensor<Real> t_g;
    if (config_.uses_geometry()) {
      if (!geometry) throw ContractError("forward: this configuration requires a geometry prior");
      const auto& g = geometry->tensor();
      const std::int64_t wh = clip.dim(2) / ModelConfig::kOutputStride;
      const std::int64_t ww = clip.dim(3) / ModelConfig::kOutputStride;
      if (g.rank() != 3 || g.dim(1) != wh || g.dim(2) != ww) {
        throw DimensionError("forward: geometry input " + shape_str(g.shape()) + " does not match working resolution " +
                             std::to_string(wh) + "x" + std::to_string(ww));
      }
      t_g = encode_geometry(g, geometry_, training_);
    }
    auto features = backbone_forward(clip);
    Tensor<Real> attention;
    if (config_.use_geometry_fusion) attention = attention_maps(t_g, geometry_, config_.scales);
    auto fused = fuse_scales(features, config_.use_geometry_fusion ? &attention : nullptr);
    auto [f_first, f_last] = project_frames(fused);
    Tensor<Real> g_pred;
    if (config_.use_geometry_prediction) g_pred = geometry_.pred_proj(t_g);
    return predict_corners(f_first, f_last, config_.use_geometry_prediction ? &g_pred : nullptr);
  }

 private:
  void check_clip(const Tensor<Real>& clip) const {
    if (clip.rank() != 4 || clip.dim(0) != 3) {
      throw ContractError("clip must be [3,T,H,W], got " + shape_str(clip.shape()));
    }
    if (clip.dim(1) != config_.frames()) {
      throw ContractError("clip has " + std::to_string(clip.dim(1)) + " frames, model expects " +
                          std::to_string(config_.frames()));
    }
    const std::int64_t div = std::int64_t{1} << (config_.scales + 1);
    if (clip.dim(2) % div != 0 || clip.dim(3) % div != 0) {
      throw ContractError("clip spatial size " + std::to_string(clip.dim(2)) + "x" + std::to_string(clip.dim(3)) +
                          " is not divisible by " + std::to_string(div));
    }
  }

  ModelConfig config_;
  ParameterStore<Real> store_;
  bool training_ = true;
  std::vector<Conv3d<Real>> stage_conv_;
  std::vector<BatchNorm<Real>> stage_bn_;
  std::vector<Conv3d<Real>> stage_proj_;
  GeometryEncoder<Real> geometry_;
  std::array<Conv2d<Real>, 2> frame_conv_;
  std::array<BatchNorm<Real>, 2> frame_bn_;
  std::array<std::array<Conv2d<Real>, 2>, 2> heads_;
};

}  // namespace gastkit
