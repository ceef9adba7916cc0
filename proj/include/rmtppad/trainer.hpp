#pragma once

#include <torch/torch.h>

#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "rmtppad/config.hpp"
#include "rmtppad/data.hpp"
#include "rmtppad/evaluate.hpp"
#include "rmtppad/grad_analysis.hpp"
#include "rmtppad/losses.hpp"
#include "rmtppad/model.hpp"

namespace rmtppad {

/// Parameter groups with separate schedules: decayed weights, undecayed
/// normalization/scale parameters, and biases.
enum class ParamGroup { weights = 0, norms = 1, biases = 2 };

ParamGroup param_group_of(const std::string& name, const torch::Tensor& p);

/// Linear warmup (lr from 0, bias lr from warmup_bias_lr, momentum from
/// warmup_momentum) followed by cosine decay to lr * final_lr_ratio.
class LrSchedule {
 public:
  LrSchedule(const TrainConfig& cfg, int64_t steps_per_epoch, int64_t total_steps);

  double lr(int64_t step, ParamGroup group) const;
  double momentum(int64_t step) const;
  /// Cosine factor in [final_lr_ratio, 1].
  double cosine_factor(int64_t step) const;
  int64_t warmup_steps() const { return warmup_steps_; }
  int64_t total_steps() const { return total_steps_; }

 private:
  TrainConfig cfg_;
  int64_t warmup_steps_;
  int64_t total_steps_;
};

struct LossBreakdown {
  torch::Tensor detection;  // core + aux + encoder proposals
  torch::Tensor denoising;
  torch::Tensor drivable;
  torch::Tensor lane;
  torch::Tensor total;
  DetectionLoss detection_parts;

  /// Per-task losses for gradient analysis (denoising counts as detection).
  std::vector<std::pair<Task, torch::Tensor>> per_task() const;
};

/// Denoising inputs for one batch; empty when G = 0 or no image has ground truth.
struct DenoisingBatch {
  std::vector<DenoisingGroup> groups;
  std::optional<DenoisingQueries> queries;
  int64_t expected_size() const;  // G * max M
};

DenoisingBatch make_denoising_batch(const std::vector<ImageTargets>& targets, int64_t groups,
                                    const DenoisingNoise& noise, int64_t num_classes, std::mt19937_64& rng);

/// Forward + every enabled loss term.
LossBreakdown compute_losses(RmtPpad& model, const Batch& batch, const TrainConfig& cfg,
                             const DenoisingBatch* dn = nullptr);

struct StepReport {
  int64_t step = 0;
  int64_t epoch = 0;
  double lr = 0.0;
  double total = 0.0, detection = 0.0, denoising = 0.0, drivable = 0.0, lane = 0.0;
  int64_t dn_queries = 0;     // K actually fed to the decoder
  int64_t dn_expected = 0;    // G * max M over the batch
  std::vector<GradRecord> gradients;  // filled when gradient recording is on
};

struct EpochLog {
  int64_t epoch = 0;
  int64_t steps = 0;
  double mean_total = 0.0, mean_detection = 0.0, mean_denoising = 0.0, mean_drivable = 0.0, mean_lane = 0.0;
  std::optional<MetricsRecord> validation;
};

/// Owns the model and optimizer; one call to step() is one optimizer update.
class Trainer {
 public:
  Trainer(const RunConfig& cfg, std::vector<Sample> train_set);

  StepReport step();
  bool finished() const { return step_ >= schedule_.total_steps(); }

  int64_t step_index() const { return step_; }
  int64_t steps_per_epoch() const { return steps_per_epoch_; }
  const LrSchedule& schedule() const { return schedule_; }
  RmtPpad& model() { return model_; }
  const RunConfig& config() const { return cfg_; }
  const std::vector<Sample>& dataset() const { return data_; }

  /// Capture per-task shared-parameter gradients on every step.
  void record_gradients(bool on) { record_gradients_ = on; }

  /// Batch for a given step (deterministic in seed and step).
  Batch batch_for_step(int64_t step) const;

  void save_checkpoint(const std::string& path) const;
  /// Restores parameters, buffers, optimizer state and the step counter.
  void load_checkpoint(const std::string& path);

 private:
  void apply_schedule();

  RunConfig cfg_;
  std::vector<Sample> data_;
  RmtPpad model_{nullptr};
  std::unique_ptr<torch::optim::Optimizer> optimizer_;
  std::vector<ParamGroup> group_kinds_;
  int64_t steps_per_epoch_ = 1;
  LrSchedule schedule_;
  int64_t step_ = 0;
  bool record_gradients_ = false;
};

/// Loads a model (parameters and buffers) and its config from a checkpoint.
RmtPpad load_model(const std::string& checkpoint, RunConfig* cfg_out = nullptr);

struct TrainResult {
  std::string last_checkpoint;
  std::string best_checkpoint;
  std::vector<EpochLog> log;
  int64_t steps = 0;
};

/// Runs the configured schedule, writing train_log.csv, metrics.jsonl,
/// last.ckpt and best.ckpt into cfg.output_dir. Zero epochs still writes the
/// initial checkpoint.
TrainResult train(const RunConfig& cfg, std::vector<Sample> train_set, const std::vector<Sample>& val_set,
                  std::ostream* progress = nullptr);

}  // namespace rmtppad
