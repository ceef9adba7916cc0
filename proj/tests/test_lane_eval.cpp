#include <cmath>
#include <random>

#include <opencv2/imgproc.hpp>

#include "test_support.hpp"
#include "rmtppad/errors.hpp"
#include "rmtppad/lane_eval.hpp"

using namespace rmtppad;

namespace {

BinaryMask random_mask(std::mt19937_64& rng, int64_t h, int64_t w, double density) {
  std::bernoulli_distribution on(density);
  BinaryMask m(h, w);
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x) m.set(y, x, on(rng));
  return m;
}

// Independent reference: OpenCV dilation with its 7x7 elliptical kernel.
BinaryMask opencv_dilate(const BinaryMask& m) {
  cv::Mat src(static_cast<int>(m.height()), static_cast<int>(m.width()), CV_8UC1,
              const_cast<uint8_t*>(m.data().data()));
  cv::Mat dst;
  cv::dilate(src, dst, cv::getStructuringElement(cv::MORPH_ELLIPSE, cv::Size(7, 7)));
  return BinaryMask(m.height(), m.width(), std::span<const uint8_t>(dst.data, dst.total()));
}

}  // namespace

TEST_SUITE("lane_eval") {

TEST_CASE("footprint matches the OpenCV ellipse and has 33 cells") {
  cv::Mat k = cv::getStructuringElement(cv::MORPH_ELLIPSE, cv::Size(7, 7));
  int count = 0;
  for (int dy = -3; dy <= 3; ++dy) {
    for (int dx = -3; dx <= 3; ++dx) {
      CHECK(StructuringElement7::active(dy, dx) == (k.at<uint8_t>(dy + 3, dx + 3) != 0));
      count += StructuringElement7::active(dy, dx);
    }
  }
  CHECK(count == 33);
  CHECK(StructuringElement7::active_count() == 33);
  CHECK(StructuringElement7::half_width(0) == 3);
  CHECK(StructuringElement7::half_width(3) == 0);
}

TEST_CASE("single pixel dilates to the footprint") {
  BinaryMask m(9, 9);
  m.set(4, 4);
  auto d = dilate_mask(m);
  CHECK(d.count() == 33);
  for (int dy = -3; dy <= 3; ++dy)
    for (int dx = -3; dx <= 3; ++dx) CHECK(d.at(4 + dy, 4 + dx) == StructuringElement7::active(dy, dx));
}

TEST_CASE("empty mask stays empty and borders are zero padded") {
  CHECK(dilate_mask(BinaryMask(5, 7)).count() == 0);
  BinaryMask corner(5, 5);
  corner.set(0, 0);
  auto d = dilate_mask(corner);
  // Only the quadrant of the footprint that lands inside the image.
  int expected = 0;
  for (int dy = 0; dy <= 3; ++dy)
    for (int dx = 0; dx <= 3; ++dx) expected += StructuringElement7::active(dy, dx);
  CHECK(d.count() == expected);
}

TEST_CASE("dilation agrees with OpenCV on random masks") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    std::uniform_int_distribution<int64_t> dim(1, 40);
    auto m = random_mask(rng, dim(rng), dim(rng), trial % 2 ? 0.02 : 0.2);
    CHECK(dilate_mask(m) == opencv_dilate(m));
  }
}

TEST_CASE("dilation is extensive and monotone") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 30; ++trial) {
    auto a = random_mask(rng, 24, 31, 0.05);
    auto b = a;
    for (int i = 0; i < 10; ++i) b.set(static_cast<int64_t>(rng() % 24), static_cast<int64_t>(rng() % 31));
    CHECK(a.subset_of(dilate_mask(a)));
    CHECK(dilate_mask(a).subset_of(dilate_mask(b)));
  }
}

TEST_CASE("2 px vertical and horizontal lines widen to 8 px") {
  BinaryMask v(40, 40), h(40, 40);
  for (int64_t y = 0; y < 40; ++y) v.set(y, 19), v.set(y, 20);
  for (int64_t x = 0; x < 40; ++x) h.set(19, x), h.set(20, x);
  auto dv = dilate_mask(v), dh = dilate_mask(h);
  for (int64_t y = 0; y < 40; ++y) {
    int64_t width = 0;
    for (int64_t x = 0; x < 40; ++x) width += dv.at(y, x);
    CHECK(width == 8);
  }
  for (int64_t x = 0; x < 40; ++x) {
    int64_t width = 0;
    for (int64_t y = 0; y < 40; ++y) width += dh.at(y, x);
    CHECK(width == 8);
  }
}

TEST_CASE("confusion counts tally every pixel") {
  BinaryMask pred(2, 2), gt(2, 2);
  pred.set(0, 0), pred.set(0, 1);
  gt.set(0, 0), gt.set(1, 0);
  auto c = confusion_counts(pred, gt);
  CHECK(c.tp == 1);
  CHECK(c.fp == 1);
  CHECK(c.fn == 1);
  CHECK(c.tn == 1);
  CHECK_THROWS_AS(confusion_counts(BinaryMask(2, 3), BinaryMask(3, 2)), InputError);
}

TEST_CASE("lane metrics from the reference confusion matrices") {
  struct Row {
    ConfusionCounts c;
    double iou, acc;
  };
  // (TN, FP, FN, TP) as printed, with the IoU/ACC stated for each comparison.
  const Row rows[] = {{{898453, 14738, 2362, 6047}, 0.2612, 0.7191},
                      {{892833, 6235, 7982, 14550}, 0.5058, 0.6457},
                      {{886849, 26342, 282, 8127}, 0.2339, 0.9665},
                      {{885640, 13428, 1491, 21041}, 0.5851, 0.9338}};
  for (const auto& r : rows) {
    auto m = lane_metrics(r.c);
    CHECK(std::round(m.iou * 1e4) / 1e4 == doctest::Approx(r.iou).epsilon(1e-12));
    CHECK(std::round(m.line_accuracy * 1e4) / 1e4 == doctest::Approx(r.acc).epsilon(1e-12));
  }
}

TEST_CASE("line accuracy ignores false positives") {
  auto m = lane_metrics({899068, 14123, 0, 8409});
  CHECK(m.line_accuracy == 1.0);
  CHECK(m.iou == doctest::Approx(8409.0 / 22532.0).epsilon(1e-12));
}

TEST_CASE("undefined ratios are flagged") {
  auto m = lane_metrics({10, 0, 0, 0});
  CHECK_FALSE(m.iou_defined);
  CHECK_FALSE(m.accuracy_defined);
  CHECK(m.iou == 0.0);
}

TEST_CASE("region mIoU pools counts and skips empty classes") {
  std::vector<ConfusionCounts> per{{6, 2, 0, 2}, {4, 0, 2, 4}};
  auto r = region_miou(per);
  // pooled: tn 10, fp 2, fn 2, tp 6
  CHECK(r.foreground_iou == doctest::Approx(6.0 / 10.0));
  CHECK(r.background_iou == doctest::Approx(10.0 / 14.0));
  CHECK(r.miou == doctest::Approx((0.6 + 10.0 / 14.0) / 2));
  std::vector<ConfusionCounts> background_only{{5, 0, 0, 0}};
  auto b = region_miou(background_only);
  CHECK_FALSE(b.foreground_defined);
  CHECK(b.miou == 1.0);
  CHECK_THROWS_AS(region_miou(std::span<const ConfusionCounts>{}), InputError);
}

TEST_CASE("detection metrics: perfect, missing and duplicate predictions") {
  std::vector<std::vector<std::array<double, 4>>> gt{{{0.5, 0.5, 0.2, 0.2}}, {{0.3, 0.3, 0.1, 0.1}}};
  std::vector<std::vector<ScoredBox>> perfect{{{{0.5, 0.5, 0.2, 0.2}, 0.9, 0}}, {{{0.3, 0.3, 0.1, 0.1}, 0.8, 0}}};
  auto p = detection_metrics(perfect, gt);
  CHECK(p.map50 == doctest::Approx(1.0));
  CHECK(p.recall == doctest::Approx(1.0));

  // Second image missed: recall 1/2, AP = 0.5.
  std::vector<std::vector<ScoredBox>> half{{{{0.5, 0.5, 0.2, 0.2}, 0.9, 0}}, {}};
  auto h = detection_metrics(half, gt);
  CHECK(h.recall == doctest::Approx(0.5));
  CHECK(h.map50 == doctest::Approx(0.5));

  // Duplicate ranked above the true hit in image 2 lowers precision there only.
  std::vector<std::vector<ScoredBox>> dup{{{{0.5, 0.5, 0.2, 0.2}, 0.9, 0}, {{0.5, 0.5, 0.2, 0.2}, 0.95, 0}},
                                          {{{0.3, 0.3, 0.1, 0.1}, 0.8, 0}}};
  auto d = detection_metrics(dup, gt);
  CHECK(d.recall == doctest::Approx(1.0));
  // Ranked: TP(0.95), FP(0.9), TP(0.8): precision envelope 1 at r=0.5, 2/3 at r=1.
  CHECK(d.map50 == doctest::Approx(0.5 * 1.0 + 0.5 * 2.0 / 3.0));

  // Below-floor predictions are ignored.
  std::vector<std::vector<ScoredBox>> low{{{{0.5, 0.5, 0.2, 0.2}, 0.0005, 0}}, {}};
  CHECK(detection_metrics(low, gt).recall == 0.0);
  CHECK_THROWS_AS(detection_metrics({{}}, {{}}), InputError);
}

TEST_CASE("fps with a scripted clock") {
  CHECK(measure_fps(100, 2.0) == 50.0);
  CHECK_THROWS_AS(measure_fps(100, 0.0), InputError);
  int64_t frames = 0;
  FpsMeter meter([&] { return static_cast<double>(frames) / 50.0; });
  CHECK(meter.run(100, [&] { ++frames; }) == 50.0);
}

TEST_CASE("fairness report shows the 1:3 split of an ideal prediction") {
  BinaryMask raw(30, 30);
  for (int64_t y = 0; y < 30; ++y) raw.set(y, 14), raw.set(y, 15);
  std::vector<BinaryMask> raws{raw};
  std::vector<BinaryMask> preds{dilate_mask(raw)};
  auto r = fairness_report(preds, raws);
  CHECK(r.ideal_fp == 3 * r.ideal_tp);
  CHECK(r.dilated.metrics.iou == 1.0);
  CHECK(r.raw.metrics.line_accuracy == 1.0);
  CHECK(r.to_text().find("raw") != std::string::npos);
}

}
