#pragma once

#include <string>
#include <vector>

#include "rmtppad/data.hpp"
#include "rmtppad/lane_eval.hpp"
#include "rmtppad/model.hpp"

namespace rmtppad {

/// One evaluation record. Fields of a disabled task stay 0.
struct MetricsRecord {
  double recall = 0.0;
  double map50 = 0.0;
  double miou = 0.0;
  double lane_iou = 0.0;
  double lane_acc = 0.0;
  double fps = 0.0;

  std::string to_json() const;
  std::string to_text() const;
};

/// Per-image model outputs after post-processing.
struct Predictions {
  std::vector<std::vector<ScoredBox>> detections;  // empty when detection is off
  std::vector<BinaryMask> drivable;                // empty when drivable is off
  std::vector<BinaryMask> lane;                    // empty when lane is off
};

/// Scores predictions against the samples' labels (lane against the dilated label).
/// Throws InputError on an empty dataset.
MetricsRecord compute_metrics(const Predictions& pred, const std::vector<Sample>& samples);

/// Segmentation probabilities and detections per image, eval mode, no grad.
struct RawOutputs {
  std::vector<std::vector<ScoredBox>> detections;
  std::vector<torch::Tensor> drivable_prob;  // [H, W] float
  std::vector<torch::Tensor> lane_prob;
};

RawOutputs run_model(RmtPpad& model, const std::vector<Sample>& samples, int64_t batch_size = 4);

/// Thresholds probabilities into masks (prob >= t).
Predictions to_predictions(const RawOutputs& raw, const SegThresholds& thresholds);

/// Detection scores: sigmoid of each query's best class logit, one box per query.
std::vector<std::vector<ScoredBox>> decode_detections(const LayerPrediction& final_layer);

/// Full evaluation. FPS is measured over `fps_frames` single-image forward
/// passes (0 skips timing and reports 0).
MetricsRecord evaluate(RmtPpad& model, const std::vector<Sample>& samples, const SegThresholds& thresholds,
                       int64_t fps_frames = 20);

struct SweepRow {
  double threshold = 0.0;
  double miou = 0.0;
  double lane_iou = 0.0;
  double lane_acc = 0.0;
  int64_t lane_foreground = 0;  // predicted lane pixels over the dataset
};

/// 0.40, 0.45, ..., 0.95.
std::vector<double> default_threshold_grid();

/// One row per threshold, with the same threshold applied to both masks.
/// Throws ConfigError for thresholds outside (0, 1).
std::vector<SweepRow> sweep_thresholds(const RawOutputs& raw, const std::vector<Sample>& samples,
                                       const std::vector<double>& grid);

/// "threshold,miou,iou,acc" with percentages.
std::string sweep_to_csv(const std::vector<SweepRow>& rows);

/// Writes detections.jsonl, drivable.png, lane.png and overlay.png into out_dir.
struct InferResult {
  std::string detections_path, drivable_path, lane_path, overlay_path;
};
InferResult infer_image(RmtPpad& model, const std::string& image_path, const std::string& out_dir,
                        const SegThresholds& thresholds, double score_floor = 0.001);

}  // namespace rmtppad
