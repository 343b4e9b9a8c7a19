#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "gastkit/gastkit.hpp"
#include "gastkit/pipeline.hpp"

namespace {

using namespace gastkit;

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config, "JSON configuration file");
  cmd->add_option("--seed", o.seed, "Random seed (overrides the configuration)");
  cmd->add_option("--out", o.out, "Output path (overrides the configuration)");
}

nlohmann::json config_file(const std::string& path) { return path.empty() ? nlohmann::json::object() : read_json_file(path); }

struct RunFlags {
  std::string dataset, priors, resume, checkpoint, split = "test";
  std::optional<int> epochs, batch_size, clip_stride;
  std::optional<std::int64_t> max_steps;
  std::optional<double> lr;
  std::string lr_schedule;
  bool no_multi_frame = false, no_geometry_prediction = false, no_geometry_fusion = false;
};

void add_run_flags(CLI::App* cmd, RunFlags& f) {
  cmd->add_option("--dataset", f.dataset, "Dataset root");
  cmd->add_option("--priors", f.priors, "Directory with geometry priors");
  cmd->add_option("--epochs", f.epochs, "Training epochs");
  cmd->add_option("--batch-size", f.batch_size, "Clips per optimizer step");
  cmd->add_option("--max-steps", f.max_steps, "Cap on optimizer steps (0 = none)");
  cmd->add_option("--clip-stride", f.clip_stride, "Frame subsampling stride");
  cmd->add_option("--lr", f.lr, "Adam learning rate");
  cmd->add_option("--lr-schedule", f.lr_schedule, "Learning rate schedule: constant or cosine");
  cmd->add_flag("--no-multi-frame", f.no_multi_frame, "Single-frame model");
  cmd->add_flag("--no-geometry-prediction", f.no_geometry_prediction, "Drop geometry features from the heads");
  cmd->add_flag("--no-geometry-fusion", f.no_geometry_fusion, "Fuse scales with uniform weights");
}

// Precedence: flags > configuration file > defaults.
RunConfig resolve_run_config(const CommonOptions& c, const RunFlags& f) {
  RunConfig cfg = run_config_from_json(config_file(c.config));
  if (c.seed) cfg.seed = *c.seed;
  if (!c.out.empty()) cfg.out = c.out;
  if (!f.dataset.empty()) cfg.dataset = f.dataset;
  if (!f.priors.empty()) cfg.priors = f.priors;
  if (!f.resume.empty()) cfg.resume = f.resume;
  if (f.epochs) cfg.epochs = *f.epochs;
  if (f.batch_size) cfg.batch_size = *f.batch_size;
  if (f.max_steps) cfg.max_steps = *f.max_steps;
  if (f.clip_stride) cfg.clip_stride = *f.clip_stride;
  if (f.lr) cfg.optimizer.lr = *f.lr;
  if (!f.lr_schedule.empty()) cfg.lr_schedule = f.lr_schedule;
  if (f.no_multi_frame) cfg.model.use_multi_frame = false;
  if (f.no_geometry_prediction) cfg.model.use_geometry_prediction = false;
  if (f.no_geometry_fusion) cfg.model.use_geometry_fusion = false;
  cfg.validate();
  return cfg;
}

int run(int argc, char** argv) {
  CLI::App app{"gastkit: geometry-aware spatio-temporal corner detection toolkit"};
  app.require_subcommand(1);

  CommonOptions gen_opts;
  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic static-camera dataset");
  add_common(gen, gen_opts);

  CommonOptions geo_opts;
  std::string geo_dataset;
  auto* geo = app.add_subcommand("estimate-geometry", "Estimate per-view pseudo depth priors from training annotations");
  add_common(geo, geo_opts);
  geo->add_option("--dataset", geo_dataset, "Dataset root");

  CommonOptions train_opts;
  RunFlags train_flags;
  auto* tr = app.add_subcommand("train", "Train a corner detection model");
  add_common(tr, train_opts);
  add_run_flags(tr, train_flags);
  tr->add_option("--resume", train_flags.resume, "Epoch checkpoint to resume from");

  CommonOptions infer_opts;
  RunFlags infer_flags;
  auto* inf = app.add_subcommand("infer", "Predict detections for a dataset split");
  add_common(inf, infer_opts);
  add_run_flags(inf, infer_flags);
  inf->add_option("--checkpoint", infer_flags.checkpoint, "Model checkpoint")->required();
  inf->add_option("--split", infer_flags.split, "Dataset split (train or test)");

  CommonOptions eval_opts;
  std::string eval_dataset, eval_detections, eval_split = "test";
  auto* ev = app.add_subcommand("eval", "Evaluate detections against annotations");
  add_common(ev, eval_opts);
  ev->add_option("--dataset", eval_dataset, "Dataset root");
  ev->add_option("--detections", eval_detections, "Detections JSONL")->required();
  ev->add_option("--split", eval_split, "Dataset split (train or test)");

  CommonOptions plot_opts;
  std::string plot_input;
  auto* plot = app.add_subcommand("plot-pr", "Render PR curves of an evaluation as SVG");
  add_common(plot, plot_opts);
  plot->add_option("--input", plot_input, "Evaluation output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (gen->parsed()) {
    const auto spec = dataset_spec_from_json(config_file(gen_opts.config));
    const std::string out = gen_opts.out.empty() ? "data" : gen_opts.out;
    const auto m = write_dataset(out, spec, gen_opts.seed.value_or(0));
    std::cout << "wrote " << m.videos.size() << " videos in " << m.views.size() << " views to " << out << "\n";
  } else if (geo->parsed()) {
    std::string dataset = geo_dataset;
    if (dataset.empty()) dataset = run_config_from_json(config_file(geo_opts.config)).dataset;
    const std::string out = geo_opts.out.empty() ? "priors" : geo_opts.out;
    const auto priors = estimate_priors(Dataset::open(dataset));
    write_priors(out, priors);
    std::cout << "wrote " << priors.size() << " priors to " << out << "\n";
  } else if (tr->parsed()) {
    const auto cfg = resolve_run_config(train_opts, train_flags);
    const auto summary = train(cfg);
    std::cout << "trained " << summary.steps << " steps; final checkpoint " << summary.final_checkpoint << "\n";
  } else if (inf->parsed()) {
    const auto cfg = resolve_run_config(infer_opts, infer_flags);
    const std::string out = infer_opts.out.empty() ? "detections" : infer_opts.out;
    const auto preds = infer(cfg, infer_flags.checkpoint, parse_split(infer_flags.split), out);
    std::size_t n = 0;
    for (const auto& p : preds) n += p.detections.size();
    std::cout << "wrote " << n << " detections for " << preds.size() << " frames to " << out << "\n";
  } else if (ev->parsed()) {
    std::string dataset = eval_dataset;
    if (dataset.empty()) dataset = run_config_from_json(config_file(eval_opts.config)).dataset;
    const std::string out = eval_opts.out.empty() ? "eval" : eval_opts.out;
    const Dataset ds = Dataset::open(dataset);
    const auto frames = collect_frames(ds, parse_split(eval_split), read_detections(eval_detections));
    const auto report = write_evaluation(out, frames, ds.manifest().category_names);
    std::cout << "mAP " << report.map << " (AP50 " << report.mean_ap50 << ", AP75 " << report.mean_ap75 << ")\n";
  } else if (plot->parsed()) {
    std::vector<PrSeries> series;
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(plot_input)) {
      const auto name = e.path().filename().string();
      if (name.rfind("pr_", 0) == 0 && e.path().extension() == ".csv") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw DataError("no pr_*.csv files in '" + plot_input + "'");
    for (const auto& f : files) series.push_back({f.stem().string().substr(3), read_pr_csv(f.string())});
    const std::string out = plot_opts.out.empty() ? (std::filesystem::path(plot_input) / "pr.svg").string() : plot_opts.out;
    std::ofstream os(out);
    if (!os) throw DataError("cannot write '" + out + "'");
    os << pr_svg(series);
    std::cout << "wrote " << out << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  gastkit::configure_allocator();
  try {
    return run(argc, argv);
  } catch (const gastkit::ContractError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const gastkit::DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const gastkit::NonFiniteError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
