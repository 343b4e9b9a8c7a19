#pragma once

#include <cstdint>
#include <nlohmann/json.hpp>
#include <string>

#include "gastkit/decoder.hpp"
#include "gastkit/losses.hpp"
#include "gastkit/model.hpp"
#include "gastkit/nn.hpp"

// Run configuration schema (JSON). Every field is optional; missing fields
// keep their defaults. Command-line flags override file values.
//
// {
//   "dataset": "data",            dataset root written by gen-data
//   "priors": "priors",           directory with prior_view<k>.json files
//   "out": "run",                 output directory
//   "seed": 0,
//   "batch_size": 4,              clips per optimizer step
//   "epochs": 1,
//   "max_steps": 0,               0 = no cap
//   "clip_stride": 1,             frame subsampling before windowing
//   "resume": "",                 checkpoint to resume from
//   "model":     { "clip_len", "categories", "input_height", "input_width", "scales",
//                  "base_channels", "fused_channels", "use_multi_frame",
//                  "use_geometry_prediction", "use_geometry_fusion" },
//   "loss":      { "w_focal", "w_pull", "w_push", "focal_alpha", "focal_beta",
//                  "push_margin", "gaussian_iou" },
//   "optimizer": { "lr", "beta1", "beta2", "eps",
//                  "schedule" },   "constant" or "cosine" (decay to 0 over the run)
//   "decoder":   { "threshold", "topk", "emb_threshold", "iou_nms" }
// }

namespace gastkit {

struct RunConfig {
  std::string dataset = "data";
  std::string priors = "priors";
  std::string out = "run";
  std::uint64_t seed = 0;
  int batch_size = 4;
  int epochs = 1;
  std::int64_t max_steps = 0;
  int clip_stride = 1;
  std::string resume;
  ModelConfig model;
  LossConfig loss;
  AdamOptions optimizer;
  std::string lr_schedule = "constant";
  DecoderConfig decoder;

  void validate() const {
    model.validate();
    loss.validate();
    if (batch_size < 1) throw ContractError("RunConfig: batch_size must be >= 1");
    if (epochs < 1) throw ContractError("RunConfig: epochs must be >= 1");
    if (max_steps < 0) throw ContractError("RunConfig: max_steps must be >= 0");
    if (clip_stride < 1) throw ContractError("RunConfig: clip_stride must be >= 1");
    if (!(optimizer.lr > 0)) throw ContractError("RunConfig: learning rate must be positive");
    if (!(optimizer.beta1 >= 0 && optimizer.beta1 < 1 && optimizer.beta2 >= 0 && optimizer.beta2 < 1)) {
      throw ContractError("RunConfig: Adam betas must lie in [0,1)");
    }
    if (lr_schedule != "constant" && lr_schedule != "cosine") {
      throw ContractError("RunConfig: lr schedule must be 'constant' or 'cosine', got '" + lr_schedule + "'");
    }
    if (decoder.topk < 1) throw ContractError("RunConfig: decoder topk must be >= 1");
  }
};

inline nlohmann::json to_json(const ModelConfig& m) {
  return {{"clip_len", m.clip_len},
          {"categories", m.categories},
          {"input_height", m.input_height},
          {"input_width", m.input_width},
          {"scales", m.scales},
          {"base_channels", m.base_channels},
          {"fused_channels", m.fused_channels},
          {"use_multi_frame", m.use_multi_frame},
          {"use_geometry_prediction", m.use_geometry_prediction},
          {"use_geometry_fusion", m.use_geometry_fusion}};
}

inline nlohmann::json to_json(const RunConfig& c) {
  return {{"dataset", c.dataset},
          {"priors", c.priors},
          {"out", c.out},
          {"seed", c.seed},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"max_steps", c.max_steps},
          {"clip_stride", c.clip_stride},
          {"resume", c.resume},
          {"model", to_json(c.model)},
          {"loss",
           {{"w_focal", c.loss.w_focal},
            {"w_pull", c.loss.w_pull},
            {"w_push", c.loss.w_push},
            {"focal_alpha", c.loss.focal_alpha},
            {"focal_beta", c.loss.focal_beta},
            {"push_margin", c.loss.push_margin},
            {"gaussian_iou", c.loss.gaussian_iou}}},
          {"optimizer",
           {{"lr", c.optimizer.lr}, {"beta1", c.optimizer.beta1}, {"beta2", c.optimizer.beta2}, {"eps", c.optimizer.eps},
            {"schedule", c.lr_schedule}}},
          {"decoder",
           {{"threshold", c.decoder.threshold},
            {"topk", c.decoder.topk},
            {"emb_threshold", c.decoder.emb_threshold},
            {"iou_nms", c.decoder.iou_nms}}}};
}

namespace detail {

template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& field) {
  if (j.contains(key)) field = j.at(key).get<T>();
}

}  // namespace detail

/// Overlays the fields present in `j` onto `base`.
inline RunConfig run_config_from_json(const nlohmann::json& j, RunConfig base = {}) {
  using detail::read_field;
  try {
    read_field(j, "dataset", base.dataset);
    read_field(j, "priors", base.priors);
    read_field(j, "out", base.out);
    read_field(j, "seed", base.seed);
    read_field(j, "batch_size", base.batch_size);
    read_field(j, "epochs", base.epochs);
    read_field(j, "max_steps", base.max_steps);
    read_field(j, "clip_stride", base.clip_stride);
    read_field(j, "resume", base.resume);
    if (j.contains("model")) {
      const auto& m = j.at("model");
      read_field(m, "clip_len", base.model.clip_len);
      read_field(m, "categories", base.model.categories);
      read_field(m, "input_height", base.model.input_height);
      read_field(m, "input_width", base.model.input_width);
      read_field(m, "scales", base.model.scales);
      read_field(m, "base_channels", base.model.base_channels);
      read_field(m, "fused_channels", base.model.fused_channels);
      read_field(m, "use_multi_frame", base.model.use_multi_frame);
      read_field(m, "use_geometry_prediction", base.model.use_geometry_prediction);
      read_field(m, "use_geometry_fusion", base.model.use_geometry_fusion);
    }
    if (j.contains("loss")) {
      const auto& l = j.at("loss");
      read_field(l, "w_focal", base.loss.w_focal);
      read_field(l, "w_pull", base.loss.w_pull);
      read_field(l, "w_push", base.loss.w_push);
      read_field(l, "focal_alpha", base.loss.focal_alpha);
      read_field(l, "focal_beta", base.loss.focal_beta);
      read_field(l, "push_margin", base.loss.push_margin);
      read_field(l, "gaussian_iou", base.loss.gaussian_iou);
    }
    if (j.contains("optimizer")) {
      const auto& o = j.at("optimizer");
      read_field(o, "lr", base.optimizer.lr);
      read_field(o, "beta1", base.optimizer.beta1);
      read_field(o, "beta2", base.optimizer.beta2);
      read_field(o, "eps", base.optimizer.eps);
      read_field(o, "schedule", base.lr_schedule);
    }
    if (j.contains("decoder")) {
      const auto& d = j.at("decoder");
      read_field(d, "threshold", base.decoder.threshold);
      read_field(d, "topk", base.decoder.topk);
      read_field(d, "emb_threshold", base.decoder.emb_threshold);
      read_field(d, "iou_nms", base.decoder.iou_nms);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ContractError(std::string("run config: ") + e.what());
  }
  return base;
}

}  // namespace gastkit
