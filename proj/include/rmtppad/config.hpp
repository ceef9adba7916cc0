#pragma once

#include <cstdint>
#include <string>

#include "rmtppad/det_decoder.hpp"
#include "rmtppad/encoder.hpp"
#include "rmtppad/losses.hpp"
#include "rmtppad/seg_decoder.hpp"

namespace rmtppad {

/// Which task heads exist. Ablations toggle these.
struct TaskSet {
  bool detection = true;
  bool drivable = true;
  bool lane = true;

  bool segmentation() const { return drivable || lane; }
  bool any() const { return detection || segmentation(); }
};

struct ModelConfig {
  EncoderConfig encoder;
  bool use_gca = true;
  int64_t gca_reduction = 16;
  double gate_lo = 0.05;
  double gate_hi = 0.95;
  int64_t seg_width = 64;
  DetDecoderConfig det;
  TaskSet tasks;
};

struct TrainConfig {
  std::string optimizer = "sgd";  // sgd | adamw
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  double warmup_epochs = 3.0;
  double warmup_momentum = 0.8;
  double warmup_bias_lr = 0.1;
  double final_lr_ratio = 0.01;  // cosine decays lr to lr * final_lr_ratio
  int64_t epochs = 250;
  int64_t max_steps = 0;  // > 0 caps the run (and sets the schedule length)
  int64_t batch_size = 4;
  uint64_t seed = 0;
  double grad_clip = 0.0;  // max global norm, 0 disables
  int64_t dn_groups = 100;
  DenoisingNoise dn_noise;
  LossWeights loss;
  SegLossParams seg_loss;
  DetLossOptions det_loss;
  SegThresholds thresholds;
  int64_t log_every = 10;
  int64_t eval_every = 0;  // epochs between validation passes, 0 = final epoch only
};

struct DataConfig {
  std::string source = "synthetic";  // synthetic | bdd
  int64_t synthetic_count = 20;
  uint64_t synthetic_seed = 0;
  int64_t val_count = 0;  // synthetic validation scenes; 0 validates on the training set
  std::string bdd_images;
  std::string bdd_annotations;
  std::string bdd_da_masks;
  std::string bdd_ll_masks;
};

/// Everything a run needs. Serialized as "key = value" lines; '#' starts a
/// comment. Unknown keys and malformed values are rejected with the line number.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  DataConfig data;
  std::string output_dir = "runs/default";

  /// Full-size settings (640x640, width 256, 300 queries, 6 layers, G = 100).
  static RunConfig full();
  /// Desk-scale settings (320x320, width 128, 60 queries, 3 layers, G = 10).
  static RunConfig toy();

  static RunConfig parse(const std::string& text, const RunConfig& defaults = toy());
  static RunConfig load(const std::string& path);

  /// Applies one "key = value" override.
  void set(const std::string& key, const std::string& value);

  std::string serialize() const;
  void validate() const;
};

}  // namespace rmtppad
