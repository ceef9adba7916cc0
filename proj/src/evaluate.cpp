#include "rmtppad/evaluate.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "json.hpp"
#include "rmtppad/errors.hpp"
#include "rmtppad/image_io.hpp"

#include <opencv2/imgproc.hpp>

namespace fs = std::filesystem;

namespace rmtppad {

std::string MetricsRecord::to_json() const {
  nlohmann::ordered_json j;
  j["recall"] = recall;
  j["map50"] = map50;
  j["miou"] = miou;
  j["lane_iou"] = lane_iou;
  j["lane_acc"] = lane_acc;
  j["fps"] = fps;
  return j.dump();
}

std::string MetricsRecord::to_text() const {
  std::ostringstream os;
  os << std::fixed << std::setprecision(1);
  os << "Recall(%)  mAP50(%)  mIoU(%)  IoU(%)  ACC(%)  FPS\n";
  os << std::setw(9) << recall * 100 << std::setw(10) << map50 * 100 << std::setw(9) << miou * 100 << std::setw(8)
     << lane_iou * 100 << std::setw(8) << lane_acc * 100 << std::setw(7) << fps << "\n";
  return os.str();
}

MetricsRecord compute_metrics(const Predictions& pred, const std::vector<Sample>& samples) {
  if (samples.empty()) throw InputError("cannot evaluate an empty dataset");
  const auto n = samples.size();
  MetricsRecord m;
  if (!pred.detections.empty()) {
    if (pred.detections.size() != n) throw InputError("one detection list per sample required");
    std::vector<std::vector<std::array<double, 4>>> gt;
    int64_t total = 0;
    for (const auto& s : samples) {
      gt.push_back(s.boxes);
      total += static_cast<int64_t>(s.boxes.size());
    }
    if (total > 0) {
      const auto d = detection_metrics(pred.detections, gt);
      m.recall = d.recall;
      m.map50 = d.map50;
    }
  }
  if (!pred.drivable.empty()) {
    if (pred.drivable.size() != n) throw InputError("one drivable mask per sample required");
    std::vector<ConfusionCounts> counts;
    for (size_t i = 0; i < n; ++i) counts.push_back(confusion_counts(pred.drivable[i], samples[i].drivable));
    m.miou = region_miou(counts).miou;
  }
  if (!pred.lane.empty()) {
    if (pred.lane.size() != n) throw InputError("one lane mask per sample required");
    ConfusionCounts pooled;
    for (size_t i = 0; i < n; ++i) pooled += confusion_counts(pred.lane[i], samples[i].lane);
    const auto lm = lane_metrics(pooled);
    m.lane_iou = lm.iou;
    m.lane_acc = lm.line_accuracy;
  }
  return m;
}

std::vector<std::vector<ScoredBox>> decode_detections(const LayerPrediction& final_layer) {
  auto probs = torch::sigmoid(final_layer.logits.detach()).to(torch::kFloat64).contiguous();
  auto boxes = final_layer.boxes.detach().to(torch::kFloat64).contiguous();
  auto [best, label] = probs.max(-1);
  best = best.contiguous();
  label = label.contiguous();
  const auto b = probs.size(0), q = probs.size(1);
  std::vector<std::vector<ScoredBox>> out(b);
  auto bx = boxes.accessor<double, 3>();
  auto sc = best.accessor<double, 2>();
  auto lb = label.accessor<int64_t, 2>();
  for (int64_t i = 0; i < b; ++i) {
    out[i].reserve(q);
    for (int64_t k = 0; k < q; ++k)
      out[i].push_back({{bx[i][k][0], bx[i][k][1], bx[i][k][2], bx[i][k][3]}, sc[i][k], lb[i][k]});
  }
  return out;
}

RawOutputs run_model(RmtPpad& model, const std::vector<Sample>& samples, int64_t batch_size) {
  if (samples.empty()) throw InputError("cannot run on an empty dataset");
  torch::NoGradGuard no_grad;
  const bool was_training = model->is_training();
  model->eval();
  RawOutputs raw;
  const auto& tasks = model->config().tasks;
  const auto n = static_cast<int64_t>(samples.size());
  for (int64_t start = 0; start < n; start += batch_size) {
    std::vector<int64_t> idx;
    for (int64_t i = start; i < std::min(n, start + batch_size); ++i) idx.push_back(i);
    auto batch = collate(samples, idx);
    auto out = model->forward(batch.images);
    if (out.detection) {
      auto dets = decode_detections(out.detection->main.final_layer());
      for (auto& d : dets) raw.detections.push_back(std::move(d));
    }
    if (out.segmentation) {
      for (int64_t i = 0; i < batch.size(); ++i) {
        if (tasks.drivable) raw.drivable_prob.push_back(torch::sigmoid(out.segmentation->drivable[i][0]).contiguous());
        if (tasks.lane) raw.lane_prob.push_back(torch::sigmoid(out.segmentation->lane[i][0]).contiguous());
      }
    }
  }
  model->train(was_training);
  return raw;
}

Predictions to_predictions(const RawOutputs& raw, const SegThresholds& thresholds) {
  Predictions p;
  p.detections = raw.detections;
  for (const auto& t : raw.drivable_prob) p.drivable.push_back(tensor_to_mask(t.ge(thresholds.drivable)));
  for (const auto& t : raw.lane_prob) p.lane.push_back(tensor_to_mask(t.ge(thresholds.lane)));
  return p;
}

MetricsRecord evaluate(RmtPpad& model, const std::vector<Sample>& samples, const SegThresholds& thresholds,
                       int64_t fps_frames) {
  thresholds.validate();
  auto raw = run_model(model, samples);
  auto m = compute_metrics(to_predictions(raw, thresholds), samples);
  if (fps_frames > 0) {
    torch::NoGradGuard no_grad;
    const bool was_training = model->is_training();
    model->eval();
    auto one = collate(samples, {0}).images;
    model->forward(one);  // warm-up
    FpsMeter meter;
    m.fps = meter.run(fps_frames, [&] {
      auto out = model->forward(one);
      if (out.segmentation) {
        if (out.segmentation->drivable.defined()) torch::sigmoid(out.segmentation->drivable).ge(thresholds.drivable);
        if (out.segmentation->lane.defined()) torch::sigmoid(out.segmentation->lane).ge(thresholds.lane);
      }
      if (out.detection) torch::sigmoid(out.detection->main.final_layer().logits);
    });
    model->train(was_training);
  }
  return m;
}

std::vector<double> default_threshold_grid() {
  std::vector<double> grid;
  for (int i = 0; i < 12; ++i) grid.push_back((40 + 5 * i) / 100.0);
  return grid;
}

std::vector<SweepRow> sweep_thresholds(const RawOutputs& raw, const std::vector<Sample>& samples,
                                       const std::vector<double>& grid) {
  std::vector<SweepRow> rows;
  for (double t : grid) {
    if (!(t > 0.0 && t < 1.0)) throw ConfigError("sweep thresholds must lie in (0, 1)");
    Predictions p;
    for (const auto& d : raw.drivable_prob) p.drivable.push_back(tensor_to_mask(d.ge(t)));
    for (const auto& l : raw.lane_prob) p.lane.push_back(tensor_to_mask(l.ge(t)));
    SweepRow r;
    r.threshold = t;
    const auto m = compute_metrics(p, samples);
    r.miou = m.miou;
    r.lane_iou = m.lane_iou;
    r.lane_acc = m.lane_acc;
    for (const auto& l : p.lane) r.lane_foreground += l.count();
    rows.push_back(r);
  }
  return rows;
}

std::string sweep_to_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  os << "threshold,miou,iou,acc\n" << std::fixed;
  for (const auto& r : rows)
    os << std::setprecision(2) << r.threshold << "," << std::setprecision(1) << r.miou * 100 << ","
       << r.lane_iou * 100 << "," << r.lane_acc * 100 << "\n";
  return os.str();
}

InferResult infer_image(RmtPpad& model, const std::string& image_path, const std::string& out_dir,
                        const SegThresholds& thresholds, double score_floor) {
  thresholds.validate();
  cv::Mat rgb = read_rgb(image_path);
  const auto h = model->config().encoder.input_height, w = model->config().encoder.input_width;
  cv::Mat resized;
  cv::resize(rgb, resized, cv::Size(static_cast<int>(w), static_cast<int>(h)), 0, 0, cv::INTER_LINEAR);

  Sample s;
  s.id = fs::path(image_path).stem().string();
  s.image = rgb_to_tensor(resized);
  s.drivable = BinaryMask(h, w);
  s.lane = BinaryMask(h, w);
  s.lane_raw = BinaryMask(h, w);
  auto raw = run_model(model, {s}, 1);
  auto pred = to_predictions(raw, thresholds);

  fs::create_directories(out_dir);
  InferResult r;
  r.detections_path = (fs::path(out_dir) / "detections.jsonl").string();
  r.drivable_path = (fs::path(out_dir) / "drivable.png").string();
  r.lane_path = (fs::path(out_dir) / "lane.png").string();
  r.overlay_path = (fs::path(out_dir) / "overlay.png").string();

  std::ofstream det(r.detections_path, std::ios::trunc);
  std::vector<std::array<double, 4>> kept;
  if (!pred.detections.empty()) {
    auto dets = pred.detections[0];
    std::stable_sort(dets.begin(), dets.end(), [](const ScoredBox& a, const ScoredBox& b) { return a.score > b.score; });
    for (const auto& d : dets) {
      if (d.score < score_floor) continue;
      nlohmann::ordered_json j;
      j["image_id"] = s.id;
      j["class"] = d.label;
      j["bbox"] = d.cxcywh;
      j["score"] = d.score;
      det << j.dump() << "\n";
      if (d.score >= 0.5) kept.push_back(d.cxcywh);
    }
  }
  const BinaryMask da = pred.drivable.empty() ? BinaryMask(h, w) : pred.drivable[0];
  const BinaryMask ll = pred.lane.empty() ? BinaryMask(h, w) : pred.lane[0];
  write_mask(r.drivable_path, da);
  write_mask(r.lane_path, ll);
  write_rgb(r.overlay_path, compose_overlay(resized, da, ll, kept));
  return r;
}

}  // namespace rmtppad
