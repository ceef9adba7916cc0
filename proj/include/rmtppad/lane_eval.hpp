#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace rmtppad {

/// Row-major H x W grid of {0, 1}.
class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(int64_t height, int64_t width);
  /// Any nonzero input value becomes 1.
  BinaryMask(int64_t height, int64_t width, std::span<const uint8_t> values);

  int64_t height() const { return height_; }
  int64_t width() const { return width_; }
  int64_t size() const { return height_ * width_; }
  bool empty() const { return size() == 0; }

  uint8_t at(int64_t y, int64_t x) const { return data_[y * width_ + x]; }
  void set(int64_t y, int64_t x, bool v = true) { data_[y * width_ + x] = v ? 1 : 0; }

  int64_t count() const;
  /// True if every foreground pixel of *this is foreground in `other`.
  bool subset_of(const BinaryMask& other) const;

  const std::vector<uint8_t>& data() const { return data_; }
  bool operator==(const BinaryMask&) const = default;

 private:
  int64_t height_ = 0;
  int64_t width_ = 0;
  std::vector<uint8_t> data_;
};

/// The frozen 7x7 elliptical footprint (33 active cells, origin at the center).
struct StructuringElement7 {
  static constexpr int kSize = 7;
  static constexpr int kRadius = 3;
  static constexpr std::array<const char*, 7> kRows{"0001000", "0111110", "1111111", "1111111",
                                                    "1111111", "0111110", "0001000"};

  static bool active(int dy, int dx);  // offsets in [-3, 3]
  static int active_count();
  /// Horizontal half-width of the active run in row `dy`.
  static int half_width(int dy);
};

/// Binary dilation with zero padding at the border; output is a superset of input.
BinaryMask dilate_mask(const BinaryMask& mask);

struct ConfusionCounts {
  int64_t tn = 0, fp = 0, fn = 0, tp = 0;

  int64_t total() const { return tn + fp + fn + tp; }
  ConfusionCounts& operator+=(const ConfusionCounts& o);
  bool operator==(const ConfusionCounts&) const = default;
};

/// Per-pixel tally of (pred, gt). Throws InputError on dimension mismatch.
ConfusionCounts confusion_counts(const BinaryMask& pred, const BinaryMask& gt);

/// iou = tp / (tp + fn + fp); line_accuracy = tp / (tp + fn). Undefined
/// ratios are reported as 0 with the matching flag cleared.
struct LaneMetrics {
  double iou = 0.0;
  double line_accuracy = 0.0;
  bool iou_defined = false;
  bool accuracy_defined = false;
};

LaneMetrics lane_metrics(const ConfusionCounts& c);

/// Two-class (background, foreground) IoU pooled over a dataset. A class with
/// no pixels in either pred or gt contributes nothing to its pooled counts;
/// classes with an empty pooled union are skipped in the mean.
struct RegionIou {
  double miou = 0.0;
  double foreground_iou = 0.0;
  double background_iou = 0.0;
  bool foreground_defined = false;
  bool background_defined = false;
};

/// Throws InputError on an empty dataset.
RegionIou region_miou(std::span<const ConfusionCounts> per_image);

struct ScoredBox {
  std::array<double, 4> cxcywh{};
  double score = 0.0;
  int64_t label = 0;
};

struct DetectionMetrics {
  double map50 = 0.0;
  double recall = 0.0;
  int64_t true_positives = 0;
  int64_t ground_truths = 0;
};

/// Single-class AP at an IoU threshold with greedy score-ordered matching and
/// all-points interpolation. Predictions below `score_floor` are dropped.
/// Throws InputError when the dataset has no ground truth.
DetectionMetrics detection_metrics(const std::vector<std::vector<ScoredBox>>& predictions,
                                   const std::vector<std::vector<std::array<double, 4>>>& ground_truth,
                                   double iou_threshold = 0.5, double score_floor = 0.001);

/// frames / seconds. Throws InputError unless seconds > 0 and frames >= 1.
double measure_fps(int64_t frames, double seconds);

/// Times `frames` calls of `step` with a replaceable clock (seconds as double).
class FpsMeter {
 public:
  using Clock = std::function<double()>;
  FpsMeter();
  explicit FpsMeter(Clock clock);

  double run(int64_t frames, const std::function<void()>& step);

 private:
  Clock clock_;
};

struct FairnessSide {
  ConfusionCounts counts;
  LaneMetrics metrics;
};

/// Predictions scored against raw (2 px) and dilated (8 px) lane labels side by
/// side, plus the TP:FP split of an ideal prediction (the dilated label itself)
/// against the raw label.
struct FairnessReport {
  FairnessSide raw;
  FairnessSide dilated;
  int64_t ideal_tp = 0;
  int64_t ideal_fp = 0;

  std::string to_text() const;
};

FairnessReport fairness_report(std::span<const BinaryMask> predictions, std::span<const BinaryMask> raw_labels);

}  // namespace rmtppad
