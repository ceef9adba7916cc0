#include "rmtppad/lane_eval.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "rmtppad/box_geometry.hpp"
#include "rmtppad/errors.hpp"

namespace rmtppad {

BinaryMask::BinaryMask(int64_t height, int64_t width)
    : height_(height), width_(width), data_(static_cast<size_t>(height * width), 0) {
  if (height < 0 || width < 0) throw InputError("mask dimensions must be non-negative");
}

BinaryMask::BinaryMask(int64_t height, int64_t width, std::span<const uint8_t> values) : BinaryMask(height, width) {
  if (static_cast<int64_t>(values.size()) != size()) throw InputError("mask data size does not match dimensions");
  std::transform(values.begin(), values.end(), data_.begin(), [](uint8_t v) { return v != 0 ? 1 : 0; });
}

int64_t BinaryMask::count() const { return std::accumulate(data_.begin(), data_.end(), int64_t{0}); }

bool BinaryMask::subset_of(const BinaryMask& other) const {
  if (height_ != other.height_ || width_ != other.width_) return false;
  for (size_t i = 0; i < data_.size(); ++i)
    if (data_[i] && !other.data_[i]) return false;
  return true;
}

bool StructuringElement7::active(int dy, int dx) {
  if (dy < -kRadius || dy > kRadius || dx < -kRadius || dx > kRadius) return false;
  return kRows[dy + kRadius][dx + kRadius] == '1';
}

int StructuringElement7::active_count() {
  int n = 0;
  for (int dy = -kRadius; dy <= kRadius; ++dy)
    for (int dx = -kRadius; dx <= kRadius; ++dx) n += active(dy, dx) ? 1 : 0;
  return n;
}

int StructuringElement7::half_width(int dy) {
  int hw = -1;
  for (int dx = 0; dx <= kRadius; ++dx)
    if (active(dy, dx)) hw = dx;
  return hw;
}

BinaryMask dilate_mask(const BinaryMask& mask) {
  const auto h = mask.height(), w = mask.width();
  BinaryMask out(h, w);
  if (mask.empty()) return out;
  // The footprint is a union of centered horizontal runs, so dilate each row
  // horizontally once per distinct half-width and OR the shifted rows.
  std::array<int, StructuringElement7::kSize> radius{};
  for (int dy = -3; dy <= 3; ++dy) radius[dy + 3] = StructuringElement7::half_width(dy);

  std::vector<int64_t> prefix(static_cast<size_t>(w + 1));
  // horiz[(y * w + x) * 4 + r]: any foreground within [x - r, x + r] on row y.
  std::vector<uint8_t> horiz(static_cast<size_t>(h * w * 4), 0);
  for (int64_t y = 0; y < h; ++y) {
    prefix[0] = 0;
    for (int64_t x = 0; x < w; ++x) prefix[x + 1] = prefix[x] + mask.at(y, x);
    for (int64_t x = 0; x < w; ++x) {
      for (int r = 0; r <= 3; ++r) {
        const auto lo = std::max<int64_t>(0, x - r);
        const auto hi = std::min<int64_t>(w, x + r + 1);
        horiz[(y * w + x) * 4 + r] = prefix[hi] - prefix[lo] > 0 ? 1 : 0;
      }
    }
  }
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      bool on = false;
      for (int dy = -3; dy <= 3 && !on; ++dy) {
        const auto yy = y + dy;
        const int r = radius[dy + 3];
        if (r < 0 || yy < 0 || yy >= h) continue;
        on = horiz[(yy * w + x) * 4 + r] != 0;
      }
      if (on) out.set(y, x);
    }
  }
  return out;
}

ConfusionCounts& ConfusionCounts::operator+=(const ConfusionCounts& o) {
  tn += o.tn;
  fp += o.fp;
  fn += o.fn;
  tp += o.tp;
  return *this;
}

ConfusionCounts confusion_counts(const BinaryMask& pred, const BinaryMask& gt) {
  if (pred.height() != gt.height() || pred.width() != gt.width())
    throw InputError("prediction and ground-truth masks differ in size");
  std::array<int64_t, 4> bins{};
  const auto& p = pred.data();
  const auto& g = gt.data();
  for (size_t i = 0; i < p.size(); ++i) ++bins[(g[i] << 1) | p[i]];
  // index = gt * 2 + pred: 0 tn, 1 fp, 2 fn, 3 tp
  return {bins[0], bins[1], bins[2], bins[3]};
}

LaneMetrics lane_metrics(const ConfusionCounts& c) {
  LaneMetrics m;
  const auto iou_den = c.tp + c.fn + c.fp;
  const auto acc_den = c.tp + c.fn;
  if (iou_den > 0) {
    m.iou = static_cast<double>(c.tp) / static_cast<double>(iou_den);
    m.iou_defined = true;
  }
  if (acc_den > 0) {
    m.line_accuracy = static_cast<double>(c.tp) / static_cast<double>(acc_den);
    m.accuracy_defined = true;
  }
  return m;
}

RegionIou region_miou(std::span<const ConfusionCounts> per_image) {
  if (per_image.empty()) throw InputError("mIoU over an empty dataset");
  ConfusionCounts pooled;
  for (const auto& c : per_image) pooled += c;
  RegionIou r;
  // Foreground: tp over (tp + fp + fn). Background swaps roles: tn over (tn + fn + fp).
  const auto fg_den = pooled.tp + pooled.fp + pooled.fn;
  const auto bg_den = pooled.tn + pooled.fn + pooled.fp;
  double sum = 0.0;
  int classes = 0;
  if (fg_den > 0) {
    r.foreground_iou = static_cast<double>(pooled.tp) / static_cast<double>(fg_den);
    r.foreground_defined = true;
    sum += r.foreground_iou;
    ++classes;
  }
  if (bg_den > 0) {
    r.background_iou = static_cast<double>(pooled.tn) / static_cast<double>(bg_den);
    r.background_defined = true;
    sum += r.background_iou;
    ++classes;
  }
  r.miou = classes > 0 ? sum / classes : 0.0;
  return r;
}

namespace {

BoxXyxy to_xyxy(const std::array<double, 4>& b) {
  return {b[0] - 0.5 * b[2], b[1] - 0.5 * b[3], b[0] + 0.5 * b[2], b[1] + 0.5 * b[3]};
}

}  // namespace

DetectionMetrics detection_metrics(const std::vector<std::vector<ScoredBox>>& predictions,
                                   const std::vector<std::vector<std::array<double, 4>>>& ground_truth,
                                   double iou_threshold, double score_floor) {
  if (predictions.size() != ground_truth.size()) throw InputError("prediction and ground-truth image counts differ");
  DetectionMetrics out;
  for (const auto& g : ground_truth) out.ground_truths += static_cast<int64_t>(g.size());
  if (out.ground_truths == 0) throw InputError("detection metrics need at least one ground-truth box");

  struct Candidate {
    double score;
    size_t image;
    size_t index;
  };
  std::vector<Candidate> all;
  for (size_t i = 0; i < predictions.size(); ++i)
    for (size_t k = 0; k < predictions[i].size(); ++k)
      if (predictions[i][k].score >= score_floor) all.push_back({predictions[i][k].score, i, k});
  std::stable_sort(all.begin(), all.end(), [](const Candidate& a, const Candidate& b) { return a.score > b.score; });

  std::vector<std::vector<char>> used(ground_truth.size());
  for (size_t i = 0; i < ground_truth.size(); ++i) used[i].assign(ground_truth[i].size(), 0);

  std::vector<double> precision, recall;
  int64_t tp = 0, fp = 0;
  for (const auto& c : all) {
    const auto pred = to_xyxy(predictions[c.image][c.index].cxcywh);
    double best = -1.0;
    int64_t best_j = -1;
    const auto& gts = ground_truth[c.image];
    for (size_t j = 0; j < gts.size(); ++j) {
      if (used[c.image][j]) continue;
      const double v = iou(pred, to_xyxy(gts[j]));
      if (v > best) {
        best = v;
        best_j = static_cast<int64_t>(j);
      }
    }
    if (best_j >= 0 && best >= iou_threshold) {
      used[c.image][best_j] = 1;
      ++tp;
    } else {
      ++fp;
    }
    precision.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(out.ground_truths));
  }

  // All-points interpolation: precision envelope, summed over recall steps.
  for (int64_t i = static_cast<int64_t>(precision.size()) - 2; i >= 0; --i)
    precision[i] = std::max(precision[i], precision[i + 1]);
  double ap = 0.0, prev_recall = 0.0;
  for (size_t i = 0; i < precision.size(); ++i) {
    ap += (recall[i] - prev_recall) * precision[i];
    prev_recall = recall[i];
  }
  out.map50 = ap;
  out.true_positives = tp;
  out.recall = static_cast<double>(tp) / static_cast<double>(out.ground_truths);
  return out;
}

double measure_fps(int64_t frames, double seconds) {
  if (frames < 1) throw InputError("FPS needs at least one frame");
  if (!(seconds > 0.0)) throw InputError("FPS needs a positive elapsed time");
  return static_cast<double>(frames) / seconds;
}

FpsMeter::FpsMeter()
    : clock_([] {
        using namespace std::chrono;
        return duration<double>(steady_clock::now().time_since_epoch()).count();
      }) {}

FpsMeter::FpsMeter(Clock clock) : clock_(std::move(clock)) {}

double FpsMeter::run(int64_t frames, const std::function<void()>& step) {
  const double start = clock_();
  for (int64_t i = 0; i < frames; ++i) step();
  return measure_fps(frames, clock_() - start);
}

FairnessReport fairness_report(std::span<const BinaryMask> predictions, std::span<const BinaryMask> raw_labels) {
  if (predictions.size() != raw_labels.size()) throw InputError("fairness report needs paired masks");
  FairnessReport r;
  for (size_t i = 0; i < predictions.size(); ++i) {
    const auto dilated = dilate_mask(raw_labels[i]);
    r.raw.counts += confusion_counts(predictions[i], raw_labels[i]);
    r.dilated.counts += confusion_counts(predictions[i], dilated);
    const auto ideal = confusion_counts(dilated, raw_labels[i]);
    r.ideal_tp += ideal.tp;
    r.ideal_fp += ideal.fp;
  }
  r.raw.metrics = lane_metrics(r.raw.counts);
  r.dilated.metrics = lane_metrics(r.dilated.counts);
  return r;
}

std::string FairnessReport::to_text() const {
  std::ostringstream os;
  char line[160];
  os << "label      TN         FP         FN         TP         IoU      ACC\n";
  for (const auto& [name, side] : {std::pair{"raw", &raw}, std::pair{"dilated", &dilated}}) {
    std::snprintf(line, sizeof line, "%-10s %-10lld %-10lld %-10lld %-10lld %.4f   %.4f\n", name,
                  static_cast<long long>(side->counts.tn), static_cast<long long>(side->counts.fp),
                  static_cast<long long>(side->counts.fn), static_cast<long long>(side->counts.tp),
                  side->metrics.iou, side->metrics.line_accuracy);
    os << line;
  }
  os << "ideal prediction vs raw label: TP " << ideal_tp << " FP " << ideal_fp;
  if (ideal_tp > 0) os << " (TP:FP = 1:" << static_cast<double>(ideal_fp) / static_cast<double>(ideal_tp) << ")";
  os << "\n";
  return os.str();
}

}  // namespace rmtppad
