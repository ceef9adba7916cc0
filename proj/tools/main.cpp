// rmtppad command-line entry point.
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "rmtppad/config.hpp"
#include "rmtppad/data.hpp"
#include "rmtppad/errors.hpp"
#include "rmtppad/evaluate.hpp"
#include "rmtppad/grad_analysis.hpp"
#include "rmtppad/image_io.hpp"
#include "rmtppad/trainer.hpp"

namespace fs = std::filesystem;
using namespace rmtppad;

namespace {

RunConfig make_config(const std::string& path, const std::vector<std::string>& overrides) {
  RunConfig cfg = path.empty() ? RunConfig::toy() : RunConfig::load(path);
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  cfg.validate();
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw InputError("cannot write " + path.string());
  f << text;
}

std::vector<Sample> validation_set(const RunConfig& cfg, const std::vector<Sample>& train_set) {
  if (cfg.data.source == "synthetic" && cfg.data.val_count > 0)
    return generate_synthetic_dataset(cfg.data.val_count, cfg.model.encoder.input_height,
                                      cfg.model.encoder.input_width, cfg.data.synthetic_seed + 1000003);
  return train_set;
}

std::vector<Sample> dataset_with_report(const RunConfig& cfg) {
  LoadReport report;
  auto data = load_dataset(cfg, &report);
  for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";
  if (report.skipped_missing_mask > 0)
    std::cerr << "skipped " << report.skipped_missing_mask << " image(s) with missing masks\n";
  return data;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-task driving perception: detection, drivable area and lane segmentation"};
  app.require_subcommand(1);

  std::string config_path, weights, out, image, in_dir;
  std::vector<std::string> overrides;
  double da_threshold = -1, ll_threshold = -1;
  int64_t steps = 200, fps_frames = 20, n = 20, bins = 50, size = 320;
  uint64_t seed = 0;
  std::string gca = "on", resume;
  std::vector<double> grid;

  auto add_config = [&](CLI::App* cmd, bool required) {
    auto* opt = cmd->add_option("--config", config_path, "key = value config file");
    if (required) opt->required();
    cmd->add_option("--set", overrides, "override a config key (key=value), repeatable");
  };

  auto* train_cmd = app.add_subcommand("train", "train a model");
  add_config(train_cmd, true);
  train_cmd->add_option("--resume", resume, "continue from a checkpoint");

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  add_config(eval_cmd, true);
  eval_cmd->add_option("--weights", weights, "checkpoint")->required();
  eval_cmd->add_option("--da-threshold", da_threshold, "drivable area threshold");
  eval_cmd->add_option("--ll-threshold", ll_threshold, "lane threshold");
  eval_cmd->add_option("--fps-frames", fps_frames, "single-image passes to time (0 = skip)");
  eval_cmd->add_option("--out", out, "metrics JSON path");

  auto* sweep_cmd = app.add_subcommand("sweep-thresholds", "segmentation metrics over a threshold grid");
  add_config(sweep_cmd, true);
  sweep_cmd->add_option("--weights", weights, "checkpoint")->required();
  sweep_cmd->add_option("--grid", grid, "thresholds (default 0.40..0.95 step 0.05)")->delimiter(',');
  sweep_cmd->add_option("--out", out, "CSV path (default stdout)");

  auto* grad_cmd = app.add_subcommand("grad-analyze", "histogram of per-task gradient cosine similarities");
  add_config(grad_cmd, true);
  grad_cmd->add_option("--steps", steps, "training steps to record")->check(CLI::PositiveNumber);
  grad_cmd->add_option("--gca", gca, "on|off")->check(CLI::IsMember({"on", "off"}));
  grad_cmd->add_option("--bins", bins, "histogram bins")->check(CLI::PositiveNumber);
  grad_cmd->add_option("--out", out, "output directory")->required();

  auto* dilate_cmd = app.add_subcommand("dilate-labels", "dilate every lane mask PNG in a directory");
  dilate_cmd->add_option("--in", in_dir, "input directory")->required()->check(CLI::ExistingDirectory);
  dilate_cmd->add_option("--out", out, "output directory")->required();

  auto* infer_cmd = app.add_subcommand("infer", "run one image and write masks, detections and an overlay");
  infer_cmd->add_option("--weights", weights, "checkpoint")->required();
  infer_cmd->add_option("--image", image, "input image")->required();
  infer_cmd->add_option("--out", out, "output directory")->required();
  infer_cmd->add_option("--da-threshold", da_threshold, "drivable area threshold");
  infer_cmd->add_option("--ll-threshold", ll_threshold, "lane threshold");

  auto* synth_cmd = app.add_subcommand("gen-synth", "write a synthetic dataset in BDD-style layout");
  synth_cmd->add_option("--n", n, "number of scenes")->required()->check(CLI::PositiveNumber);
  synth_cmd->add_option("--seed", seed, "generator seed")->required();
  synth_cmd->add_option("--size", size, "square image size in pixels");
  synth_cmd->add_option("--out", out, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) {
      auto cfg = make_config(config_path, overrides);
      auto data = dataset_with_report(cfg);
      auto val = validation_set(cfg, data);
      if (!resume.empty()) {
        Trainer t(cfg, data);
        t.load_checkpoint(resume);
        while (!t.finished()) {
          auto r = t.step();
          if (cfg.train.log_every > 0 && r.step % cfg.train.log_every == 0)
            std::cout << "step " << r.step << " loss " << r.total << "\n";
        }
        const auto path = (fs::path(cfg.output_dir) / "last.ckpt").string();
        t.save_checkpoint(path);
        std::cout << evaluate(t.model(), val, cfg.train.thresholds, 0).to_text();
        return 0;
      }
      auto result = train(cfg, std::move(data), val, &std::cout);
      std::cout << "wrote " << result.last_checkpoint << " after " << result.steps << " steps\n";
      return 0;
    }
    if (*eval_cmd) {
      auto cfg = make_config(config_path, overrides);
      if (da_threshold >= 0) cfg.train.thresholds.drivable = da_threshold;
      if (ll_threshold >= 0) cfg.train.thresholds.lane = ll_threshold;
      cfg.train.thresholds.validate();
      auto model = load_model(weights);
      auto data = dataset_with_report(cfg);
      auto m = evaluate(model, data, cfg.train.thresholds, fps_frames);
      std::cout << m.to_text();
      if (!out.empty()) write_text(out, m.to_json() + "\n");
      else std::cout << m.to_json() << "\n";
      return 0;
    }
    if (*sweep_cmd) {
      auto cfg = make_config(config_path, overrides);
      auto model = load_model(weights);
      auto data = dataset_with_report(cfg);
      if (grid.empty()) grid = default_threshold_grid();
      auto rows = sweep_thresholds(run_model(model, data), data, grid);
      const auto csv = sweep_to_csv(rows);
      if (out.empty()) std::cout << csv;
      else write_text(out, csv);
      return 0;
    }
    if (*grad_cmd) {
      auto cfg = make_config(config_path, overrides);
      cfg.model.use_gca = gca == "on";
      cfg.train.max_steps = steps;
      Trainer t(cfg, dataset_with_report(cfg));
      t.record_gradients(true);
      GradientConflictTracker tracker;
      while (!t.finished()) tracker.add(t.step().gradients);
      fs::create_directories(out);
      nlohmann::ordered_json summary;
      summary["gca"] = gca;
      summary["steps"] = tracker.steps();
      summary["skipped"] = tracker.skipped();
      summary["fraction_negative"] = tracker.fraction_negative();
      for (const auto& pair : GradientConflictTracker::kPairs) {
        const auto& samples = tracker.samples(pair);
        if (samples.empty()) continue;
        const auto tag = task_name(pair.first) + "_" + task_name(pair.second);
        auto [hist, s] = build_histogram(samples, bins, pair);
        write_text(fs::path(out) / (tag + ".csv"), hist.to_csv());
        write_histogram_plot((fs::path(out) / (tag + ".png")).string(), hist,
                             task_name(pair.first) + " vs " + task_name(pair.second) + " (gca " + gca + ")");
        summary["pairs"][tag] = {{"mean", s.mean}, {"fraction_negative", s.fraction_negative}, {"samples", s.samples}};
      }
      write_text(fs::path(out) / "summary.json", summary.dump(2) + "\n");
      std::cout << summary.dump(2) << "\n";
      return 0;
    }
    if (*dilate_cmd) {
      fs::create_directories(out);
      int64_t count = 0;
      for (const auto& e : fs::directory_iterator(in_dir)) {
        if (!e.is_regular_file() || e.path().extension() != ".png") continue;
        write_mask((fs::path(out) / e.path().filename()).string(), dilate_mask(read_mask(e.path().string())));
        ++count;
      }
      std::cout << "dilated " << count << " mask(s)\n";
      return 0;
    }
    if (*infer_cmd) {
      RunConfig cfg;
      auto model = load_model(weights, &cfg);
      auto th = cfg.train.thresholds;
      if (da_threshold >= 0) th.drivable = da_threshold;
      if (ll_threshold >= 0) th.lane = ll_threshold;
      auto r = infer_image(model, image, out, th);
      std::cout << r.detections_path << "\n" << r.drivable_path << "\n" << r.lane_path << "\n" << r.overlay_path << "\n";
      return 0;
    }
    if (*synth_cmd) {
      auto samples = generate_synthetic_dataset(n, size, size, seed);
      const fs::path root(out);
      for (const auto* d : {"images", "da", "ll"}) fs::create_directories(root / d);
      nlohmann::json records = nlohmann::json::array();
      for (const auto& s : samples) {
        write_rgb((root / "images" / (s.id + ".png")).string(), tensor_to_rgb(s.image));
        write_mask((root / "da" / (s.id + ".png")).string(), s.drivable);
        write_mask((root / "ll" / (s.id + ".png")).string(), s.lane_raw);
        nlohmann::json labels = nlohmann::json::array();
        for (const auto& b : s.boxes) {
          labels.push_back({{"category", "car"},
                            {"box2d",
                             {{"x1", (b[0] - b[2] / 2) * size},
                              {"y1", (b[1] - b[3] / 2) * size},
                              {"x2", (b[0] + b[2] / 2) * size},
                              {"y2", (b[1] + b[3] / 2) * size}}}});
        }
        records.push_back({{"name", s.id + ".png"}, {"labels", labels}});
      }
      write_text(root / "annotations.json", records.dump(1) + "\n");
      std::cout << "wrote " << samples.size() << " scenes to " << out << "\n";
      return 0;
    }
  } catch (const TrainingAbort& e) {
    std::cerr << "training aborted (" << e.component() << "): " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
