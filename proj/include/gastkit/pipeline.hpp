#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <nlohmann/json.hpp>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "gastkit/archive.hpp"
#include "gastkit/config.hpp"
#include "gastkit/dataset.hpp"
#include "gastkit/decoder.hpp"
#include "gastkit/eval_metrics.hpp"
#include "gastkit/geometry_prior.hpp"
#include "gastkit/losses.hpp"
#include "gastkit/model.hpp"
#include "gastkit/runtime.hpp"

namespace gastkit {

// ---------------------------------------------------------------------------
// Geometry priors

inline std::string prior_file_name(int view) { return "prior_view" + std::to_string(view) + ".json"; }

/// Priors of every view from the training split only, at the working
/// resolution of the network (input size / output stride).
inline std::vector<GeometryPrior> estimate_priors(const Dataset& ds) {
  const auto& m = ds.manifest();
  std::vector<Annotation> anns;
  for (int vi : ds.videos(Split::train)) {
    const int view = m.videos[vi].view;
    for (const auto& frame : ds.annotations(vi))
      for (const auto& b : frame) anns.push_back({view, b.category, b.box});
  }
  const int wh = m.height / ModelConfig::kOutputStride;
  const int ww = m.width / ModelConfig::kOutputStride;
  std::vector<GeometryPrior> out;
  for (const auto& v : m.views) {
    const auto full = build_geometry_prior(anns, v.id, m.categories(), m.height, m.width);
    GeometryPrior working{v.id, wh, ww, {}};
    for (const auto& d : full.depth_maps) working.depth_maps.push_back(rescale_depth_map(d, wh, ww));
    out.push_back(std::move(working));
  }
  return out;
}

inline void write_priors(const std::string& dir, const std::vector<GeometryPrior>& priors) {
  fs::create_directories(dir);
  for (const auto& p : priors) write_json_file((fs::path(dir) / prior_file_name(p.view)).string(), prior_to_json(p));
}

inline GeometryPrior load_prior(const std::string& path) {
  FileAccessLog::instance().record(path);
  return prior_from_json(read_json_file(path));
}

/// Network inputs of every view's prior, keyed by view id.
template <typename Real>
std::map<int, std::unique_ptr<GeometryInput<Real>>> load_geometry_inputs(const std::string& dir, const Manifest& m,
                                                                         const ModelConfig& model) {
  std::map<int, std::unique_ptr<GeometryInput<Real>>> out;
  for (const auto& v : m.views) {
    const std::string path = (fs::path(dir) / prior_file_name(v.id)).string();
    if (!fs::exists(path)) {
      throw PriorUnavailableError("geometry prior '" + path + "' not found; run estimate-geometry first");
    }
    const auto prior = load_prior(path);
    if (prior.categories() != model.categories) {
      throw DataError("prior '" + path + "' has " + std::to_string(prior.categories()) + " categories, model expects " +
                      std::to_string(model.categories));
    }
    out.emplace(v.id, std::make_unique<GeometryInput<Real>>(prior.template input_tensor<Real>()));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Clip data

/// Frames (and optionally annotations) of one split held in memory, plus the
/// clip windows over them.
class ClipData {
 public:
  ClipData(const Dataset& ds, Split split, int clip_len, int clip_stride, bool with_annotations) : ds_(&ds) {
    videos_ = ds.videos(split);
    frames_.resize(videos_.size());
    boxes_.resize(videos_.size());
    parallel_for(static_cast<int>(videos_.size()), worker_threads(), [&](int i) {
      const int vi = videos_[i];
      const int n = ds.manifest().videos[vi].frames;
      for (int f = 0; f < n; ++f) frames_[i].push_back(ds.frame(vi, f).data);
      if (with_annotations) boxes_[i] = ds.annotations(vi);
    });
    for (std::size_t i = 0; i < videos_.size(); ++i) {
      auto c = sample_clips(static_cast<int>(frames_[i].size()), clip_len, clip_stride, static_cast<int>(i));
      clips_.insert(clips_.end(), c.begin(), c.end());
    }
  }

  const std::vector<Clip>& clips() const { return clips_; }
  int video_count() const { return static_cast<int>(videos_.size()); }
  // Dataset index of local video i.
  int dataset_video(int i) const { return videos_[i]; }
  const VideoEntry& entry(int i) const { return ds_->manifest().videos[videos_[i]]; }
  int frame_count(int i) const { return static_cast<int>(frames_[i].size()); }
  const std::vector<LabeledBox>& boxes(int video, int frame) const { return boxes_.at(video).at(frame); }

  template <typename Real>
  Tensor<Real> clip_tensor(const Clip& clip) const {
    const auto& m = ds_->manifest();
    const std::size_t plane = static_cast<std::size_t>(m.height) * m.width;
    const std::int64_t t = static_cast<std::int64_t>(clip.frames.size());
    std::vector<Real> data(3 * t * plane);
    for (std::int64_t k = 0; k < t; ++k) {
      const auto& f = frames_[clip.video][clip.frames[k]];
      for (int c = 0; c < 3; ++c)
        std::copy(f.begin() + c * plane, f.begin() + (c + 1) * plane, data.begin() + (c * t + k) * plane);
    }
    return Tensor<Real>::from_data({3, t, m.height, m.width}, std::move(data));
  }

 private:
  const Dataset* ds_;
  std::vector<int> videos_;
  std::vector<std::vector<std::vector<float>>> frames_;
  std::vector<std::vector<std::vector<LabeledBox>>> boxes_;
  std::vector<Clip> clips_;
};

// ---------------------------------------------------------------------------
// Training

struct LossRecord {
  std::int64_t step = 0;
  double focal = 0;
  double pull = 0;
  double push = 0;
  double total = 0;
};

struct TrainSummary {
  std::vector<LossRecord> log;  // records of this invocation only
  std::int64_t steps = 0;       // optimizer steps including resumed ones
  int epochs_completed = 0;
  std::string final_checkpoint;
};

inline std::string epoch_checkpoint_name(int epoch) { return "epoch_" + std::to_string(epoch) + ".ckpt"; }

inline std::string state_path_for(const std::string& checkpoint) {
  return fs::path(checkpoint).replace_extension(".state").string();
}

template <typename Real>
void save_train_state(const std::string& path, Adam<Real>& opt, int epoch) {
  std::vector<ArchiveEntry> entries;
  entries.push_back({"train.epoch", {1}, ScalarType::f64, {static_cast<double>(epoch)}});
  entries.push_back({"adam.step", {1}, ScalarType::f64, {static_cast<double>(opt.step_count())}});
  const auto& params = opt.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& m = opt.first_moments()[i];
    const auto& v = opt.second_moments()[i];
    entries.push_back({"adam.m." + params[i].name, params[i].tensor.shape(), scalar_type_of<Real>(),
                       std::vector<double>(m.begin(), m.end())});
    entries.push_back({"adam.v." + params[i].name, params[i].tensor.shape(), scalar_type_of<Real>(),
                       std::vector<double>(v.begin(), v.end())});
  }
  write_archive(path, entries);
}

// Restores optimizer moments and step count; returns the completed epoch count.
template <typename Real>
int load_train_state(const std::string& path, Adam<Real>& opt) {
  const auto entries = read_archive(path);
  std::map<std::string, const ArchiveEntry*> by_name;
  for (const auto& e : entries) by_name[e.name] = &e;
  auto get = [&](const std::string& name) -> const ArchiveEntry& {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw DataError("training state '" + path + "' lacks entry '" + name + "'");
    return *it->second;
  };
  const int epoch = static_cast<int>(get("train.epoch").values.at(0));
  opt.set_step_count(static_cast<std::int64_t>(get("adam.step").values.at(0)));
  const auto& params = opt.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& m = get("adam.m." + params[i].name);
    const auto& v = get("adam.v." + params[i].name);
    if (m.values.size() != opt.first_moments()[i].size() || v.values.size() != opt.second_moments()[i].size()) {
      throw DataError("training state '" + path + "' has mismatched moments for '" + params[i].name + "'");
    }
    for (std::size_t j = 0; j < m.values.size(); ++j) {
      opt.first_moments()[i][j] = static_cast<Real>(m.values[j]);
      opt.second_moments()[i][j] = static_cast<Real>(v.values[j]);
    }
  }
  return epoch;
}

/// Trains a model on the training split as configured and writes config.json,
/// loss_log.csv, one checkpoint (plus optimizer state) per completed epoch and
/// final.ckpt with a final.json marker into cfg.out.
///
/// A non-finite loss or gradient aborts the run with NonFiniteError after the
/// current (last good) weights are saved to last_good.ckpt.
inline TrainSummary train(const RunConfig& cfg) {
  cfg.validate();
  const Dataset ds = Dataset::open(cfg.dataset);
  const auto& m = ds.manifest();
  if (m.categories() != cfg.model.categories) {
    throw ContractError("dataset has " + std::to_string(m.categories()) + " categories, model expects " +
                        std::to_string(cfg.model.categories));
  }
  if (m.height != cfg.model.input_height || m.width != cfg.model.input_width) {
    throw ContractError("dataset frames are " + std::to_string(m.height) + "x" + std::to_string(m.width) +
                        ", model expects " + std::to_string(cfg.model.input_height) + "x" +
                        std::to_string(cfg.model.input_width));
  }
  const ClipData data(ds, Split::train, cfg.model.frames(), cfg.clip_stride, true);
  if (data.clips().empty()) throw DataError("training split yields no clips");
  std::map<int, std::unique_ptr<GeometryInput<float>>> geometry;
  if (cfg.model.uses_geometry()) geometry = load_geometry_inputs<float>(cfg.priors, m, cfg.model);
  const fs::path out(cfg.out);
  fs::create_directories(out);
  write_json_file((out / "config.json").string(), to_json(cfg));

  const int wh = cfg.model.working_height(), ww = cfg.model.working_width();
  auto targets = [&](int video, int frame) {
    const auto& b = data.boxes(video, frame);
    return make_targets(std::span<const LabeledBox>(b), cfg.model.categories, wh, ww, ModelConfig::kOutputStride,
                        cfg.loss);
  };

  GastNet<float> net(cfg.model, cfg.seed);
  net.set_training(true);
  Adam<float> opt(net.store().parameters(), cfg.optimizer);
  int start_epoch = 0;
  if (!cfg.resume.empty()) {
    load_checkpoint(net.store(), cfg.resume);
    start_epoch = load_train_state(state_path_for(cfg.resume), opt);
  }

  std::ofstream log_file((out / "loss_log.csv").string(), start_epoch > 0 ? std::ios::app : std::ios::trunc);
  if (!log_file) throw DataError("cannot write loss log in '" + cfg.out + "'");
  log_file.precision(10);
  if (start_epoch == 0) log_file << "step,focal,pull,push,total\n";

  TrainSummary summary;
  summary.steps = opt.step_count();
  summary.epochs_completed = start_epoch;
  const std::size_t nclips = data.clips().size();
  const std::int64_t per_epoch = static_cast<std::int64_t>((nclips + cfg.batch_size - 1) / cfg.batch_size);
  std::int64_t total_steps = per_epoch * cfg.epochs;
  if (cfg.max_steps > 0) total_steps = std::min(total_steps, cfg.max_steps);
  auto learning_rate = [&](std::int64_t step) {
    if (cfg.lr_schedule == "constant") return cfg.optimizer.lr;
    return 0.5 * cfg.optimizer.lr * (1 + std::cos(M_PI * static_cast<double>(step) / static_cast<double>(total_steps)));
  };
  bool stop = false;
  for (int epoch = start_epoch; epoch < cfg.epochs && !stop; ++epoch) {
    std::vector<std::size_t> order(nclips);
    for (std::size_t i = 0; i < nclips; ++i) order[i] = i;
    std::mt19937_64 rng(derive_seed(cfg.seed, 0x7261696e, static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t b = 0; b < nclips; b += cfg.batch_size) {
      if (cfg.max_steps > 0 && opt.step_count() >= cfg.max_steps) {
        stop = true;
        break;
      }
      const std::size_t e = std::min(nclips, b + static_cast<std::size_t>(cfg.batch_size));
      const float inv = 1.0f / static_cast<float>(e - b);
      net.store().zero_grad();
      LossRecord rec;
      rec.step = opt.step_count() + 1;
      for (std::size_t k = b; k < e; ++k) {
        const Clip& clip = data.clips()[order[k]];
        const int view = data.entry(clip.video).view;
        const GeometryInput<float>* g = geometry.empty() ? nullptr : geometry.at(view).get();
        auto pred = net.forward(data.clip_tensor<float>(clip), g);
        auto terms = total_loss(pred, targets(clip.video, clip.first()), targets(clip.video, clip.last()), cfg.loss);
        const double total = terms.total.item();
        if (!std::isfinite(total)) {
          save_checkpoint(net.store(), (out / "last_good.ckpt").string());
          throw NonFiniteError("non-finite loss at step " + std::to_string(rec.step) +
                               "; last good weights saved to last_good.ckpt");
        }
        rec.focal += terms.focal * inv;
        rec.pull += terms.pull * inv;
        rec.push += terms.push * inv;
        rec.total += total * inv;
        backward(scale(terms.total, inv));
      }
      try {
        opt.set_lr(learning_rate(opt.step_count()));
        opt.step();
      } catch (const NonFiniteError& err) {
        save_checkpoint(net.store(), (out / "last_good.ckpt").string());
        throw NonFiniteError(std::string(err.what()) + " at step " + std::to_string(rec.step) +
                             "; last good weights saved to last_good.ckpt");
      }
      log_file << rec.step << ',' << rec.focal << ',' << rec.pull << ',' << rec.push << ',' << rec.total << '\n';
      summary.log.push_back(rec);
    }
    if (!stop) {
      const std::string ckpt = (out / epoch_checkpoint_name(epoch + 1)).string();
      save_checkpoint(net.store(), ckpt);
      save_train_state(state_path_for(ckpt), opt, epoch + 1);
      summary.epochs_completed = epoch + 1;
    }
  }
  log_file.flush();
  summary.steps = opt.step_count();
  summary.final_checkpoint = (out / "final.ckpt").string();
  save_checkpoint(net.store(), summary.final_checkpoint);
  write_json_file((out / "final.json").string(), {{"checkpoint", "final.ckpt"},
                                                  {"steps", summary.steps},
                                                  {"epochs_completed", summary.epochs_completed},
                                                  {"final", true}});
  return summary;
}

// ---------------------------------------------------------------------------
// Inference

struct FramePrediction {
  int video = 0;  // local video index within the split
  int frame = 0;
  int predictions = 0;  // decoded prediction sets merged into `detections`
  std::vector<Detection> detections;
};

/// Decodes both frame slots of every clip and assembles per-frame results:
/// frames predicted twice are merged (union + NMS), others are NMS-filtered.
/// Clips are processed on `threads` workers; the result does not depend on it.
template <typename Real>
std::vector<FramePrediction> predict_frames(GastNet<Real>& net, const ClipData& data,
                                            const std::map<int, std::unique_ptr<GeometryInput<Real>>>& geometry,
                                            const DecoderConfig& dec, int threads) {
  net.set_training(false);
  const auto& clips = data.clips();
  std::vector<std::array<std::vector<Detection>, 2>> decoded(clips.size());
  parallel_for(static_cast<int>(clips.size()), threads, [&](int i) {
    NoGradGuard no_grad;
    const Clip& clip = clips[i];
    const int view = data.entry(clip.video).view;
    const GeometryInput<Real>* g = geometry.empty() ? nullptr : geometry.at(view).get();
    const auto fields = net.forward(data.template clip_tensor<Real>(clip), g);
    decoded[i][0] = decode_slot(fields, FrameSlot::first, dec);
    decoded[i][1] = decode_slot(fields, FrameSlot::last, dec);
  });
  std::vector<std::vector<std::vector<Detection>>> sets(data.video_count());
  std::vector<std::vector<std::vector<Detection>>> as_first(data.video_count()), as_last(data.video_count());
  for (int v = 0; v < data.video_count(); ++v) {
    as_first[v].resize(data.frame_count(v));
    as_last[v].resize(data.frame_count(v));
  }
  std::vector<std::vector<int>> counts(data.video_count());
  for (int v = 0; v < data.video_count(); ++v) counts[v].assign(data.frame_count(v), 0);
  for (std::size_t i = 0; i < clips.size(); ++i) {
    const Clip& c = clips[i];
    auto& f = as_first[c.video][c.first()];
    f.insert(f.end(), decoded[i][0].begin(), decoded[i][0].end());
    ++counts[c.video][c.first()];
    auto& l = as_last[c.video][c.last()];
    l.insert(l.end(), decoded[i][1].begin(), decoded[i][1].end());
    ++counts[c.video][c.last()];
  }
  std::vector<FramePrediction> out;
  for (int v = 0; v < data.video_count(); ++v) {
    for (int f = 0; f < data.frame_count(v); ++f) {
      FramePrediction p{v, f, counts[v][f], {}};
      p.detections = merge_dual_predictions(as_last[v][f], as_first[v][f], dec.iou_nms);
      out.push_back(std::move(p));
    }
  }
  return out;
}

inline void write_detections(const std::string& out_dir, const ClipData& data, Split split, const RunConfig& cfg,
                             const std::vector<FramePrediction>& preds) {
  fs::create_directories(out_dir);
  std::ofstream os((fs::path(out_dir) / "detections.jsonl").string());
  if (!os) throw DataError("cannot write detections in '" + out_dir + "'");
  nlohmann::json frames = nlohmann::json::array();
  for (const auto& p : preds) {
    const std::string& name = data.entry(p.video).name;
    for (const auto& d : p.detections) {
      nlohmann::json j{{"video", name},     {"frame", p.frame},   {"category", d.category}, {"x1", d.box.x1},
                       {"y1", d.box.y1},    {"x2", d.box.x2},     {"y2", d.box.y2},         {"score", d.score}};
      os << j.dump() << '\n';
    }
    frames.push_back({{"video", name},
                      {"frame", p.frame},
                      {"predictions", p.predictions},
                      {"merged", p.predictions >= 2},
                      {"detections", p.detections.size()}});
  }
  write_json_file((fs::path(out_dir) / "detections_meta.json").string(),
                  {{"split", split_name(split)},
                   {"clip_len", cfg.model.frames()},
                   {"clip_stride", cfg.clip_stride},
                   {"decoder",
                    {{"threshold", cfg.decoder.threshold},
                     {"topk", cfg.decoder.topk},
                     {"emb_threshold", cfg.decoder.emb_threshold},
                     {"iou_nms", cfg.decoder.iou_nms}}},
                   {"frames", frames}});
}

/// Loads a checkpoint trained with `cfg` and predicts every frame of `split`.
inline std::vector<FramePrediction> infer(const RunConfig& cfg, const std::string& checkpoint, Split split,
                                          const std::string& out_dir) {
  cfg.validate();
  const Dataset ds = Dataset::open(cfg.dataset);
  const ClipData data(ds, split, cfg.model.frames(), cfg.clip_stride, false);
  std::map<int, std::unique_ptr<GeometryInput<float>>> geometry;
  if (cfg.model.uses_geometry()) geometry = load_geometry_inputs<float>(cfg.priors, ds.manifest(), cfg.model);
  GastNet<float> net(cfg.model, cfg.seed);
  load_checkpoint(net.store(), checkpoint);
  auto preds = predict_frames(net, data, geometry, cfg.decoder, worker_threads());
  if (!out_dir.empty()) write_detections(out_dir, data, split, cfg, preds);
  return preds;
}

// ---------------------------------------------------------------------------
// Evaluation

/// Detections JSONL keyed by (video name, frame).
inline std::map<std::pair<std::string, int>, std::vector<Detection>> read_detections(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open detections '" + path + "'");
  std::map<std::pair<std::string, int>, std::vector<Detection>> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      Detection d{{j.at("x1").get<double>(), j.at("y1").get<double>(), j.at("x2").get<double>(), j.at("y2").get<double>()},
                  j.at("category").get<int>(),
                  j.at("score").get<double>()};
      out[{j.at("video").get<std::string>(), j.at("frame").get<int>()}].push_back(d);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

/// Every frame of the split paired with its detections (empty when absent).
inline std::vector<FrameEval> collect_frames(const Dataset& ds, Split split,
                                             const std::map<std::pair<std::string, int>, std::vector<Detection>>& dets) {
  std::vector<FrameEval> frames;
  for (int vi : ds.videos(split)) {
    const auto& entry = ds.manifest().videos[vi];
    const auto boxes = ds.annotations(vi);
    for (int f = 0; f < entry.frames; ++f) {
      FrameEval fe;
      fe.truth = boxes[f];
      auto it = dets.find({entry.name, f});
      if (it != dets.end()) fe.detections = it->second;
      frames.push_back(std::move(fe));
    }
  }
  return frames;
}

inline std::string pr_file_name(const std::string& category, int iou_percent) {
  return "pr_" + category + "_iou" + std::to_string(iou_percent) + ".csv";
}

/// Writes report.json and one PR CSV per category and IoU threshold.
inline EvalReport write_evaluation(const std::string& out_dir, const std::vector<FrameEval>& frames,
                                   const std::vector<std::string>& names) {
  const auto report = evaluate(frames, static_cast<int>(names.size()));
  fs::create_directories(out_dir);
  auto j = report_to_json(report, names);
  j["frames"] = frames.size();
  write_json_file((fs::path(out_dir) / "report.json").string(), j);
  for (const auto& c : report.categories) {
    const std::string& name = names.at(c.category);
    write_pr_csv((fs::path(out_dir) / pr_file_name(name, 50)).string(), c.pr50);
    write_pr_csv((fs::path(out_dir) / pr_file_name(name, 75)).string(), c.pr75);
  }
  return report;
}

// ---------------------------------------------------------------------------
// PR plot

struct PrSeries {
  std::string label;
  std::vector<PrPoint> points;
};

inline std::vector<PrPoint> read_pr_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open '" + path + "'");
  std::vector<PrPoint> out;
  std::string line;
  std::getline(is, line);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    PrPoint p;
    char comma1 = 0, comma2 = 0;
    if (!(ss >> p.threshold >> comma1 >> p.precision >> comma2 >> p.recall) || comma1 != ',' || comma2 != ',') {
      throw DataError("malformed PR row in '" + path + "': " + line);
    }
    out.push_back(p);
  }
  return out;
}

/// Precision-recall curves as a standalone SVG document.
inline std::string pr_svg(const std::vector<PrSeries>& series) {
  const double w = 480, h = 360, left = 60, right = 20, top = 20, bottom = 50;
  const double pw = w - left - right, ph = h - top - bottom;
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
  std::ostringstream os;
  os.precision(6);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" font-family=\"sans-serif\" "
     << "font-size=\"11\">\n";
  os << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
     << "\" fill=\"none\" stroke=\"#000\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double t = i / 5.0;
    os << "<text x=\"" << left + t * pw << "\" y=\"" << top + ph + 15 << "\" text-anchor=\"middle\">" << t << "</text>\n";
    os << "<text x=\"" << left - 6 << "\" y=\"" << top + (1 - t) * ph + 4 << "\" text-anchor=\"end\">" << t << "</text>\n";
  }
  os << "<text x=\"" << left + pw / 2 << "\" y=\"" << h - 12 << "\" text-anchor=\"middle\">recall</text>\n";
  os << "<text x=\"15\" y=\"" << top + ph / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 15 " << top + ph / 2
     << ")\">precision</text>\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = colors[s % 6];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& p : series[s].points) os << left + p.recall * pw << ',' << top + (1 - p.precision) * ph << ' ';
    os << "\"/>\n";
    os << "<text x=\"" << left + pw - 8 << "\" y=\"" << top + 16 + 14 * s << "\" text-anchor=\"end\" fill=\"" << color
       << "\">" << series[s].label << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace gastkit
