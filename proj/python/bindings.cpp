#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <map>
#include <string>
#include <vector>

#include "rmtppad/box_geometry.hpp"
#include "rmtppad/config.hpp"
#include "rmtppad/data.hpp"
#include "rmtppad/errors.hpp"
#include "rmtppad/evaluate.hpp"
#include "rmtppad/lane_eval.hpp"
#include "rmtppad/matching.hpp"
#include "rmtppad/similarity.hpp"
#include "rmtppad/trainer.hpp"

namespace py = pybind11;
using namespace rmtppad;

namespace {

using MaskArray = py::array_t<uint8_t, py::array::c_style | py::array::forcecast>;

BinaryMask to_mask(const MaskArray& a) {
  if (a.ndim() != 2) throw InputError("mask must be a 2-D array");
  BinaryMask m(a.shape(0), a.shape(1));
  auto r = a.unchecked<2>();
  for (py::ssize_t y = 0; y < a.shape(0); ++y)
    for (py::ssize_t x = 0; x < a.shape(1); ++x) m.set(y, x, r(y, x) != 0);
  return m;
}

MaskArray from_mask(const BinaryMask& m) {
  MaskArray out({m.height(), m.width()});
  std::copy(m.data().begin(), m.data().end(), out.mutable_data());
  return out;
}

py::dict counts_dict(const ConfusionCounts& c) {
  py::dict d;
  d["tn"] = c.tn, d["fp"] = c.fp, d["fn"] = c.fn, d["tp"] = c.tp;
  return d;
}

ConfusionCounts counts_from(const py::dict& d) {
  return {d["tn"].cast<int64_t>(), d["fp"].cast<int64_t>(), d["fn"].cast<int64_t>(), d["tp"].cast<int64_t>()};
}

py::dict metrics_dict(const MetricsRecord& m) {
  py::dict d;
  d["recall"] = m.recall, d["map50"] = m.map50, d["miou"] = m.miou;
  d["lane_iou"] = m.lane_iou, d["lane_acc"] = m.lane_acc, d["fps"] = m.fps;
  return d;
}

RunConfig config_from(const std::string& path, const std::map<std::string, std::string>& overrides) {
  RunConfig cfg = path.empty() ? RunConfig::toy() : RunConfig::load(path);
  for (const auto& [k, v] : overrides) cfg.set(k, v);
  cfg.validate();
  return cfg;
}

SegThresholds thresholds_or(const RunConfig& cfg, double da, double ll) {
  SegThresholds t = cfg.train.thresholds;
  if (da > 0) t.drivable = da;
  if (ll > 0) t.lane = ll;
  t.validate();
  return t;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Multi-task driving perception: metrics, matching, training and inference";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
  py::register_exception<InfeasibleError>(m, "InfeasibleError", PyExc_ValueError);
  py::register_exception<TrainingAbort>(m, "TrainingAbort", PyExc_RuntimeError);

  // Evaluation primitives.
  m.def("dilate_mask", [](const MaskArray& a) { return from_mask(dilate_mask(to_mask(a))); },
        "Dilate a binary mask with the 7x7 elliptical footprint.");
  m.def("confusion_counts",
        [](const MaskArray& pred, const MaskArray& gt) { return counts_dict(confusion_counts(to_mask(pred), to_mask(gt))); },
        py::arg("pred"), py::arg("gt"));
  m.def(
      "lane_metrics",
      [](const py::dict& counts) {
        auto r = lane_metrics(counts_from(counts));
        py::dict d;
        d["iou"] = r.iou, d["line_accuracy"] = r.line_accuracy;
        d["iou_defined"] = r.iou_defined, d["accuracy_defined"] = r.accuracy_defined;
        return d;
      },
      "IoU and LineAccuracy from a dict with keys tn, fp, fn, tp.");
  m.def("region_miou", [](const std::vector<py::dict>& per_image) {
    std::vector<ConfusionCounts> c;
    for (const auto& d : per_image) c.push_back(counts_from(d));
    auto r = region_miou(c);
    py::dict d;
    d["miou"] = r.miou, d["foreground_iou"] = r.foreground_iou, d["background_iou"] = r.background_iou;
    return d;
  });
  m.def(
      "detection_metrics",
      [](const std::vector<std::vector<std::tuple<std::array<double, 4>, double>>>& preds,
         const std::vector<std::vector<std::array<double, 4>>>& gt, double iou_threshold) {
        std::vector<std::vector<ScoredBox>> p;
        for (const auto& img : preds) {
          auto& row = p.emplace_back();
          for (const auto& [box, score] : img) row.push_back({box, score, 0});
        }
        auto r = detection_metrics(p, gt, iou_threshold);
        py::dict d;
        d["map50"] = r.map50, d["recall"] = r.recall;
        d["true_positives"] = r.true_positives, d["ground_truths"] = r.ground_truths;
        return d;
      },
      py::arg("predictions"), py::arg("ground_truth"), py::arg("iou_threshold") = 0.5,
      "predictions: per image a list of (cxcywh, score); ground_truth: per image a list of cxcywh.");
  m.def("measure_fps", &measure_fps, py::arg("frames"), py::arg("seconds"));
  m.def("iou", &iou, "IoU of two xyxy boxes");
  m.def("giou", &giou, "Generalized IoU of two xyxy boxes");
  m.def(
      "solve_assignment",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& cost) {
        if (cost.ndim() != 2) throw InputError("cost must be a 2-D array");
        auto a = solve_assignment(std::span<const double>(cost.data(), cost.size()), cost.shape(0), cost.shape(1));
        return py::make_tuple(a.row_to_col, a.cost);
      },
      "Minimum-cost assignment of every row to a distinct column; returns (row_to_col, cost).");
  m.def("pairwise_cosine", [](const std::vector<double>& a, const std::vector<double>& b) {
    return pairwise_cosine(a, b);
  });
  m.def(
      "similarity_histogram",
      [](const std::vector<double>& samples, int64_t bins) {
        auto [h, s] = build_histogram(samples, bins);
        py::dict d;
        d["bin_edges"] = h.bin_edges, d["counts"] = h.counts;
        d["mean"] = s.mean, d["fraction_negative"] = s.fraction_negative, d["samples"] = s.samples;
        return d;
      },
      py::arg("samples"), py::arg("bins") = 50);

  // Pipeline. Paths and key=value overrides mirror the command-line tool.
  m.def(
      "train",
      [](const std::string& config, const std::map<std::string, std::string>& overrides) {
        auto cfg = config_from(config, overrides);
        TrainResult r;
        {
          py::gil_scoped_release release;
          auto data = load_dataset(cfg);
          r = train(cfg, data, data);
        }
        py::dict d;
        d["last_checkpoint"] = r.last_checkpoint, d["best_checkpoint"] = r.best_checkpoint, d["steps"] = r.steps;
        return d;
      },
      py::arg("config") = "", py::arg("overrides") = std::map<std::string, std::string>{},
      "Train from a config file (toy preset when empty). Returns checkpoint paths.");
  m.def(
      "evaluate",
      [](const std::string& weights, double da, double ll, int64_t fps_frames) {
        RunConfig cfg;
        MetricsRecord rec;
        {
          py::gil_scoped_release release;
          auto model = load_model(weights, &cfg);
          rec = evaluate(model, load_dataset(cfg), thresholds_or(cfg, da, ll), fps_frames);
        }
        return metrics_dict(rec);
      },
      py::arg("weights"), py::arg("da_threshold") = -1.0, py::arg("ll_threshold") = -1.0,
      py::arg("fps_frames") = 0, "Evaluate a checkpoint on the dataset named in its config.");
  m.def(
      "infer",
      [](const std::string& weights, const std::string& image, const std::string& out, double da, double ll) {
        RunConfig cfg;
        InferResult r;
        {
          py::gil_scoped_release release;
          auto model = load_model(weights, &cfg);
          r = infer_image(model, image, out, thresholds_or(cfg, da, ll));
        }
        py::dict d;
        d["detections"] = r.detections_path, d["drivable"] = r.drivable_path;
        d["lane"] = r.lane_path, d["overlay"] = r.overlay_path;
        return d;
      },
      py::arg("weights"), py::arg("image"), py::arg("out"), py::arg("da_threshold") = -1.0,
      py::arg("ll_threshold") = -1.0);
  m.def(
      "synthetic_sample",
      [](int64_t size, uint64_t seed) {
        auto s = generate_synthetic_dataset(1, size, size, seed).front();
        auto img = s.image.permute({1, 2, 0}).contiguous();
        py::array_t<uint8_t> rgb({size, size, int64_t{3}});
        std::copy(img.data_ptr<uint8_t>(), img.data_ptr<uint8_t>() + img.numel(), rgb.mutable_data());
        py::dict d;
        d["image"] = rgb, d["drivable"] = from_mask(s.drivable), d["lane"] = from_mask(s.lane);
        d["lane_raw"] = from_mask(s.lane_raw), d["boxes"] = s.boxes;
        return d;
      },
      py::arg("size") = 320, py::arg("seed") = 0, "One synthetic road scene as numpy arrays.");
}
