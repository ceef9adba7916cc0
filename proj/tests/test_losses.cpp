#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "test_support.hpp"
#include "fd_check.hpp"
#include "rmtppad/box_ops.hpp"
#include "rmtppad/errors.hpp"
#include "rmtppad/losses.hpp"
#include "rmtppad/matching.hpp"

using namespace rmtppad;

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

ImageTargets targets(std::vector<std::array<double, 4>> boxes) {
  ImageTargets t;
  const auto m = static_cast<int64_t>(boxes.size());
  t.labels = torch::zeros({m}, torch::kInt64);
  t.boxes = torch::zeros({m, 4}, torch::kFloat64);
  for (int64_t i = 0; i < m; ++i)
    for (int k = 0; k < 4; ++k) t.boxes[i][k] = boxes[i][k];
  return t;
}

torch::Tensor random_boxes(int64_t n, torch::Generator& gen) {
  auto c = torch::rand({n, 2}, gen, torch::kFloat64) * 0.6 + 0.2;
  auto s = torch::rand({n, 2}, gen, torch::kFloat64) * 0.2 + 0.1;
  return torch::cat({c, s}, 1);
}

}  // namespace

TEST_SUITE("losses") {

TEST_CASE("focal loss matches the scalar formula") {
  const std::vector<double> x{-2.0, -0.3, 0.0, 0.7, 3.1, 1.2};
  const std::vector<double> t{0, 1, 1, 0, 1, 0};
  const double gamma = 2.0, alpha = 0.25;
  double expected = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    const double p = sigmoid(x[i]);
    const double pt = t[i] ? p : 1 - p;
    const double at = t[i] ? alpha : 1 - alpha;
    expected += -at * std::pow(1 - pt, gamma) * std::log(pt);
  }
  expected /= x.size();
  auto got = focal_loss(torch::tensor(x, torch::kFloat64), torch::tensor(t, torch::kFloat64), gamma, alpha);
  CHECK(got.item<double>() == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("focal loss at gamma 0 is alpha-weighted cross-entropy") {
  auto x = torch::tensor({0.4, -1.0}, torch::kFloat64);
  auto t = torch::tensor({1.0, 0.0}, torch::kFloat64);
  const double expected = (-0.5 * std::log(sigmoid(0.4)) - 0.5 * std::log(1 - sigmoid(-1.0))) / 2;
  CHECK(focal_loss(x, t, 0.0, 0.5).item<double>() == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("tversky loss matches the soft-count formula and reduces to dice") {
  auto p = torch::tensor({{0.9, 0.2, 0.6, 0.1}, {0.3, 0.8, 0.5, 0.5}}, torch::kFloat64);
  auto g = torch::tensor({{1.0, 0.0, 1.0, 0.0}, {0.0, 1.0, 1.0, 0.0}}, torch::kFloat64);
  const double a = 0.3, b = 0.7, s = 1.0;
  double expected = 0.0;
  for (int i = 0; i < 2; ++i) {
    double tp = 0, fp = 0, fn = 0;
    for (int j = 0; j < 4; ++j) {
      const double pv = p[i][j].item<double>(), gv = g[i][j].item<double>();
      tp += pv * gv;
      fp += pv * (1 - gv);
      fn += (1 - pv) * gv;
    }
    expected += 1 - (tp + s) / (tp + a * fp + b * fn + s);
  }
  expected /= 2;
  CHECK(tversky_loss(p, g, a, b, s).item<double>() == doctest::Approx(expected).epsilon(1e-12));

  // alpha = beta = 0.5 with smoothing s is dice with smoothing 2s.
  auto tv = tversky_loss(p, g, 0.5, 0.5, 1.0).item<double>();
  double dice = 0.0;
  for (int i = 0; i < 2; ++i) {
    auto inter = (p[i] * g[i]).sum().item<double>();
    auto sum = (p[i].sum() + g[i].sum()).item<double>();
    dice += 1 - (2 * inter + 2.0) / (sum + 2.0);
  }
  CHECK(tv == doctest::Approx(dice / 2).epsilon(1e-12));
  // Perfect prediction gives zero loss.
  CHECK(tversky_loss(g, g, a, b, s).item<double>() == doctest::Approx(0.0));
}

TEST_CASE("scalar and tensor GIoU agree and stay in (-1, 1]") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 200; ++t) {
    BoxXyxy a{u(rng), u(rng), 0, 0}, b{u(rng), u(rng), 0, 0};
    a[2] = a[0] + u(rng);
    a[3] = a[1] + u(rng);
    b[2] = b[0] + u(rng);
    b[3] = b[1] + u(rng);
    const double g = giou(a, b);
    CHECK(g <= 1.0);
    CHECK(g > -1.0);
    CHECK(g <= iou(a, b));
    auto ta = torch::tensor({a[0], a[1], a[2], a[3]}, torch::kFloat64);
    auto tb = torch::tensor({b[0], b[1], b[2], b[3]}, torch::kFloat64);
    CHECK(paired_giou(ta, tb).item<double>() == doctest::Approx(g).epsilon(1e-6));
  }
  CHECK(giou({0, 0, 1, 1}, {0, 0, 1, 1}) == 1.0);
  CHECK(giou({0, 0, 1, 1}, {2, 0, 3, 1}) == doctest::Approx(-1.0 / 3.0));
}

TEST_CASE("box format conversions invert each other") {
  auto gen = torch::make_generator<torch::CPUGeneratorImpl>(1);
  auto b = random_boxes(10, gen);
  CHECK(torch::allclose(xyxy_to_cxcywh(cxcywh_to_xyxy(b)), b, 1e-12, 1e-12));
}

TEST_CASE("finite differences: focal, BCE, Tversky, GIoU, L1") {
  auto gen = torch::make_generator<torch::CPUGeneratorImpl>(2);
  auto logits = torch::randn({4, 4}, gen, torch::kFloat64);
  auto target = (torch::rand({4, 4}, gen, torch::kFloat64) > 0.5).to(torch::kFloat64);
  CHECK(max_fd_error([&](const torch::Tensor& x) { return focal_loss(x, target, 2.0, 0.25); }, logits) < 1e-4);
  CHECK(max_fd_error([&](const torch::Tensor& x) { return bce_loss(x, target); }, logits) < 1e-4);
  auto probs = torch::rand({1, 4, 4}, gen, torch::kFloat64) * 0.8 + 0.1;
  CHECK(max_fd_error([&](const torch::Tensor& x) { return tversky_loss(x, target.unsqueeze(0), 0.3, 0.7, 1.0); },
                     probs) < 1e-4);
  auto boxes = random_boxes(2, gen);
  auto gt = random_boxes(2, gen);
  CHECK(max_fd_error([&](const torch::Tensor& x) {
          return paired_giou(cxcywh_to_xyxy(x), cxcywh_to_xyxy(gt)).sum();
        },
                     boxes) < 1e-4);
  CHECK(max_fd_error([&](const torch::Tensor& x) { return (x - gt).abs().sum(); }, boxes) < 1e-4);
}

TEST_CASE("finite differences: fixed-matching detection loss") {
  auto gen = torch::make_generator<torch::CPUGeneratorImpl>(4);
  const int64_t q = 4;
  auto logits = torch::randn({1, q, 1}, gen, torch::kFloat64);
  auto boxes = random_boxes(q, gen).unsqueeze(0);
  auto gt = std::vector<ImageTargets>{targets({{0.4, 0.5, 0.2, 0.3}, {0.6, 0.4, 0.25, 0.2}})};
  MatchResult match;
  match.assignment = {2, 0};
  match.unmatched = {1, 3};
  std::vector<MatchResult> matches{match};
  LossWeights w;
  for (bool iou_aware : {false, true}) {
    DetLossOptions opts;
    opts.iou_aware_cls = iou_aware;
    // The varifocal target and weight are stop-gradient, so only the logits
    // are probed in that mode.
    CHECK(max_fd_error(
              [&](const torch::Tensor& x) {
                DetectionSet s{{{x, boxes}}};
                return detection_loss_fixed(s, gt, matches, w, opts).total();
              },
              logits) < 1e-4);
  }
  DetLossOptions plain;
  plain.iou_aware_cls = false;
  CHECK(max_fd_error(
            [&](const torch::Tensor& x) {
              DetectionSet s{{{logits, x}}};
              return detection_loss_fixed(s, gt, matches, w, plain).total();
            },
            boxes) < 1e-4);
}

TEST_CASE("hungarian match minimises the matching cost") {
  auto gen = torch::make_generator<torch::CPUGeneratorImpl>(6);
  LossWeights w;
  for (int t = 0; t < 20; ++t) {
    auto logits = torch::randn({5, 1}, gen, torch::kFloat64);
    auto boxes = random_boxes(5, gen);
    ImageTargets gt;
    gt.labels = torch::zeros({3}, torch::kInt64);
    gt.boxes = random_boxes(3, gen);
    auto cost = matching_cost(logits, boxes, gt, w).contiguous();
    auto m = hungarian_match(logits, boxes, gt, w);
    std::vector<double> flat(cost.data_ptr<double>(), cost.data_ptr<double>() + cost.numel());
    // Exhaustive minimum over injections 3 -> 5.
    double best = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 5; ++a)
      for (int b = 0; b < 5; ++b)
        for (int c = 0; c < 5; ++c)
          if (a != b && a != c && b != c) best = std::min(best, flat[a] + flat[5 + b] + flat[10 + c]);
    CHECK(m.cost == doctest::Approx(best).epsilon(1e-12));
    CHECK(m.unmatched.size() == 2);
  }
}

TEST_CASE("matching cost terms follow the weights") {
  auto logits = torch::tensor({{0.0}}, torch::kFloat64);
  auto boxes = torch::tensor({{0.5, 0.5, 0.2, 0.2}}, torch::kFloat64);
  auto gt = targets({{0.5, 0.5, 0.2, 0.2}});
  auto c = matching_cost(logits, boxes, gt, LossWeights{}).item<double>();
  CHECK(c == doctest::Approx(-0.5));  // -p with p = 0.5; L1 = 0; GIoU = 1
  auto shifted = targets({{0.6, 0.5, 0.2, 0.2}});
  auto c2 = matching_cost(logits, boxes, shifted, LossWeights{}).item<double>();
  const double g = giou({0.4, 0.4, 0.6, 0.6}, {0.5, 0.4, 0.7, 0.6});
  CHECK(c2 == doctest::Approx(-0.5 + 5 * 0.1 + 2 * (1 - g)));
}

TEST_CASE("more targets than predictions is infeasible") {
  auto logits = torch::zeros({1, 1}, torch::kFloat64);
  auto boxes = torch::tensor({{0.5, 0.5, 0.2, 0.2}}, torch::kFloat64);
  auto gt = targets({{0.5, 0.5, 0.2, 0.2}, {0.3, 0.3, 0.1, 0.1}});
  CHECK_THROWS_AS(hungarian_match(logits, boxes, gt, LossWeights{}), InfeasibleError);
}

TEST_CASE("auxiliary loss covers the first L-1 layers") {
  auto gen = torch::make_generator<torch::CPUGeneratorImpl>(8);
  DetectionSet s;
  for (int l = 0; l < 3; ++l)
    s.per_layer.push_back({torch::randn({2, 5, 1}, gen, torch::kFloat64), random_boxes(10, gen).view({2, 5, 4})});
  std::vector<ImageTargets> gt{targets({{0.5, 0.5, 0.2, 0.2}}), targets({})};
  auto d = detection_loss(s, gt, LossWeights{});
  CHECK(d.aux_layers == 2);
  DetectionSet last{{s.per_layer.back()}};
  auto only = detection_loss(last, gt, LossWeights{});
  CHECK(only.aux_layers == 0);
  CHECK(d.core.item<double>() == doctest::Approx(only.core.item<double>()));
  DetectionSet first_two{{s.per_layer[0], s.per_layer[1]}};
  auto sum_first = detection_loss(DetectionSet{{s.per_layer[0]}}, gt, LossWeights{}).core +
                   detection_loss(DetectionSet{{s.per_layer[1]}}, gt, LossWeights{}).core;
  CHECK(d.aux.item<double>() == doctest::Approx(sum_first.item<double>()));
}

TEST_CASE("with N == M every prediction is matched and nothing is background") {
  auto logits = torch::tensor({{{2.0}, {-1.0}}}, torch::kFloat64);
  auto boxes = torch::tensor({{{0.5, 0.5, 0.2, 0.2}, {0.3, 0.3, 0.1, 0.1}}}, torch::kFloat64);
  auto gt = std::vector<ImageTargets>{targets({{0.3, 0.3, 0.1, 0.1}, {0.5, 0.5, 0.2, 0.2}})};
  auto m = hungarian_match(logits[0], boxes[0], gt[0], LossWeights{});
  CHECK(m.unmatched.empty());
  CHECK(m.assignment == (std::vector<int64_t>{1, 0}));
}

TEST_CASE("denoising group layout") {
  std::mt19937_64 rng(1);
  auto gt = targets({{0.5, 0.5, 0.2, 0.2}, {0.3, 0.3, 0.1, 0.1}, {0.7, 0.7, 0.2, 0.1}});
  auto g = build_denoising_group(gt, 4, DenoisingNoise{}, 1, rng);
  CHECK(g.size() == 12);
  CHECK(g.labels.size(0) == 12);
  CHECK(g.boxes.size(0) == 12);
  for (int64_t k = 0; k < 12; ++k) {
    CHECK(g.group_of[k] == k % 3);
    CHECK(g.positive[k].item<bool>() == ((k / 3) % 2 == 0));
  }
  // Positive copies keep their label; boxes stay normalized with positive size.
  for (int64_t k = 0; k < 3; ++k) CHECK(g.labels[k].item<int64_t>() == 0);
  CHECK(g.boxes.min().item<double>() >= 0.0);
  CHECK(g.boxes.max().item<double>() <= 1.0);
  CHECK(g.boxes.narrow(1, 2, 2).min().item<double>() > 0.0);

  auto empty = build_denoising_group(targets({}), 4, DenoisingNoise{}, 1, rng);
  CHECK(empty.size() == 0);

  auto packed = pack_denoising({g, empty}, 4, 1);
  CHECK(packed.size() == 12);
  CHECK(packed.group_size == 3);
  CHECK(packed.valid[0].all().item<bool>());
  CHECK_FALSE(packed.valid[1].any().item<bool>());
  CHECK((packed.labels[1] == 1).all().item<bool>());  // padding label = num_classes
}

TEST_CASE("images without ground truth contribute zero denoising loss") {
  std::mt19937_64 rng(2);
  auto empty = build_denoising_group(targets({}), 3, DenoisingNoise{}, 1, rng);
  DenoisingQueries packed = pack_denoising({empty}, 3, 1);
  DetectionSet outs{{{torch::zeros({1, 0, 1}, torch::kFloat64), torch::zeros({1, 0, 4}, torch::kFloat64)}}};
  auto l = denoising_loss(outs, packed, {empty}, {targets({})}, LossWeights{});
  CHECK(l.item<double>() == 0.0);
}

TEST_CASE("segmentation loss weights") {
  auto logits = torch::randn({1, 1, 4, 4}, torch::kFloat64);
  auto gt = (torch::rand({1, 1, 4, 4}, torch::kFloat64) > 0.5).to(torch::kFloat64);
  LossWeights w;
  SegLossParams p;
  auto s = segmentation_losses(logits, gt, logits, gt, w, p);
  const double fl = focal_loss(logits, gt, p.focal_gamma, p.focal_alpha).item<double>();
  const double bce = bce_loss(logits, gt).item<double>();
  const double tv =
      tversky_loss(torch::sigmoid(logits), gt, p.tversky_alpha, p.tversky_beta, p.tversky_smooth).item<double>();
  CHECK(s.drivable.item<double>() == doctest::Approx(24 * fl + 8 * bce));
  CHECK(s.lane.item<double>() == doctest::Approx(24 * fl + 8 * tv));
}

TEST_CASE("total loss sums and aborts on non-finite components") {
  auto a = torch::tensor(1.5), b = torch::tensor(2.0);
  CHECK(total_loss({{"det", a}, {"da", b}, {"ll", torch::Tensor()}}).item<double>() == 3.5);
  try {
    total_loss({{"det", a}, {"da", torch::tensor(std::numeric_limits<double>::quiet_NaN())}});
    FAIL("expected TrainingAbort");
  } catch (const TrainingAbort& e) {
    CHECK(e.component() == "da");
  }
}

TEST_CASE("loss weight validation") {
  LossWeights w;
  CHECK_NOTHROW(w.validate());
  w.beta = -1;
  CHECK_THROWS_AS(w.validate(), ConfigError);
}

}
