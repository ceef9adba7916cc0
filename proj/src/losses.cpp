#include "rmtppad/losses.hpp"

#include <algorithm>
#include <string>

#include "rmtppad/box_ops.hpp"
#include "rmtppad/errors.hpp"
#include "rmtppad/matching.hpp"

namespace rmtppad {

namespace F = torch::nn::functional;

void LossWeights::validate() const {
  for (double v : {alpha, beta, gamma, lambda_fl, lambda_bce, lambda_tv})
    if (!(v >= 0.0)) throw ConfigError("loss weights must be non-negative");
}

torch::Tensor matching_cost(const torch::Tensor& logits, const torch::Tensor& boxes, const ImageTargets& gt,
                            const LossWeights& w) {
  const auto m = gt.size();
  const auto n = logits.size(0);
  auto opts = torch::TensorOptions().dtype(torch::kFloat64);
  if (m == 0) return torch::zeros({0, n}, opts);
  auto prob = torch::sigmoid(logits.detach().to(torch::kFloat64));  // [N, C]
  auto pb = boxes.detach().to(torch::kFloat64);
  auto gb = gt.boxes.detach().to(torch::kFloat64);
  auto cost_cls = -prob.index_select(1, gt.labels.to(torch::kInt64)).t();  // [M, N]
  auto cost_l1 = torch::cdist(gb, pb, 1.0);
  auto cost_giou = 1.0 - pairwise_giou(cxcywh_to_xyxy(gb), cxcywh_to_xyxy(pb));
  return w.alpha * cost_cls + w.beta * cost_l1 + w.gamma * cost_giou;
}

MatchResult hungarian_match(const torch::Tensor& logits, const torch::Tensor& boxes, const ImageTargets& gt,
                            const LossWeights& w) {
  const auto m = gt.size();
  const auto n = logits.size(0);
  if (m > n)
    throw InfeasibleError("cannot match " + std::to_string(m) + " ground-truth boxes to " + std::to_string(n) +
                          " predictions");
  auto cost = matching_cost(logits, boxes, gt, w).contiguous();
  auto solved = solve_assignment(std::span<const double>(cost.data_ptr<double>(), static_cast<size_t>(m * n)), m, n);
  MatchResult r;
  r.assignment = std::move(solved.row_to_col);
  r.cost = solved.cost;
  std::vector<char> taken(n, 0);
  for (auto i : r.assignment) taken[i] = 1;
  for (int64_t i = 0; i < n; ++i)
    if (!taken[i]) r.unmatched.push_back(i);
  return r;
}

namespace {

torch::Tensor index_tensor(const std::vector<int64_t>& v) {
  return torch::tensor(v, torch::TensorOptions().dtype(torch::kInt64));
}

/// Shared body of the matched and static-assignment losses. Predictions at
/// `pred_idx` are supervised towards (gt_labels, gt_boxes) row by row; those at
/// `background_idx` towards no object.
torch::Tensor assigned_loss(const torch::Tensor& logits, const torch::Tensor& boxes, const torch::Tensor& pred_idx,
                            const torch::Tensor& gt_labels, const torch::Tensor& gt_boxes,
                            const torch::Tensor& background_idx, const LossWeights& w, const DetLossOptions& opts) {
  auto loss = torch::zeros({}, logits.options());
  const auto m = pred_idx.numel();
  const auto num_classes = logits.size(1);
  if (m > 0) {
    auto ml = logits.index_select(0, pred_idx);
    auto mb = boxes.index_select(0, pred_idx);
    auto gb = gt_boxes.to(boxes.dtype());
    auto onehot = F::one_hot(gt_labels.to(torch::kInt64), num_classes).to(logits.dtype());
    torch::Tensor target, weight;
    if (opts.iou_aware_cls) {
      auto quality = paired_iou(cxcywh_to_xyxy(mb), cxcywh_to_xyxy(gb)).detach().clamp_min(0.0).unsqueeze(1);
      target = onehot * quality;
      auto p = torch::sigmoid(ml).detach();
      weight = opts.vfl_alpha * p.pow(opts.vfl_gamma) * (1.0 - onehot) + target;
    } else {
      target = onehot;
      weight = torch::ones_like(onehot);
    }
    auto cls = F::binary_cross_entropy_with_logits(
        ml, target, F::BinaryCrossEntropyWithLogitsFuncOptions().weight(weight).reduction(torch::kSum));
    auto l1 = (mb - gb).abs().sum();
    auto giou_term = (1.0 - paired_giou(cxcywh_to_xyxy(mb), cxcywh_to_xyxy(gb))).sum();
    const double inv_m = 1.0 / static_cast<double>(m);
    loss = loss + w.alpha * inv_m * cls + w.beta * inv_m * l1 + w.gamma * inv_m * giou_term;
  }
  const auto u = background_idx.numel();
  if (u > 0) {
    auto ul = logits.index_select(0, background_idx);
    auto bce = F::binary_cross_entropy_with_logits(
        ul, torch::zeros_like(ul), F::BinaryCrossEntropyWithLogitsFuncOptions().reduction(torch::kSum));
    loss = loss + w.alpha / static_cast<double>(u) * bce;
  }
  return loss;
}

}  // namespace

torch::Tensor core_loss(const torch::Tensor& logits, const torch::Tensor& boxes, const ImageTargets& gt,
                        const MatchResult& match, const LossWeights& w, const DetLossOptions& opts) {
  if (static_cast<int64_t>(match.assignment.size()) != gt.size())
    throw InputError("matching does not cover every ground-truth box");
  auto labels = gt.size() > 0 ? gt.labels : torch::zeros({0}, torch::kInt64);
  auto gboxes = gt.size() > 0 ? gt.boxes : torch::zeros({0, 4}, boxes.options());
  return assigned_loss(logits, boxes, index_tensor(match.assignment), labels, gboxes, index_tensor(match.unmatched),
                       w, opts);
}

namespace {

torch::Tensor layer_loss(const LayerPrediction& layer, const std::vector<ImageTargets>& gt,
                         const std::vector<MatchResult>* fixed, const LossWeights& w, const DetLossOptions& opts) {
  const auto b = layer.logits.size(0);
  if (static_cast<int64_t>(gt.size()) != b) throw InputError("ground-truth list does not match batch size");
  auto sum = torch::zeros({}, layer.logits.options());
  for (int64_t i = 0; i < b; ++i) {
    auto logits = layer.logits[i];
    auto boxes = layer.boxes[i];
    auto match = fixed ? (*fixed)[i] : hungarian_match(logits, boxes, gt[i], w);
    sum = sum + core_loss(logits, boxes, gt[i], match, w, opts);
  }
  return sum / static_cast<double>(b);
}

DetectionLoss detection_loss_impl(const DetectionSet& predictions, const std::vector<ImageTargets>& gt,
                                  const std::vector<MatchResult>* fixed, const LossWeights& w,
                                  const DetLossOptions& opts, const LayerPrediction* encoder) {
  if (predictions.per_layer.empty()) throw InputError("detection set has no layers");
  DetectionLoss out;
  const auto layers = static_cast<int64_t>(predictions.per_layer.size());
  out.core = layer_loss(predictions.per_layer.back(), gt, fixed, w, opts);
  out.aux = torch::zeros({}, out.core.options());
  for (int64_t l = 0; l + 1 < layers; ++l) {
    out.aux = out.aux + layer_loss(predictions.per_layer[l], gt, fixed, w, opts);
    ++out.aux_layers;
  }
  out.encoder = torch::zeros({}, out.core.options());
  if (encoder != nullptr && opts.encoder_loss) out.encoder = layer_loss(*encoder, gt, nullptr, w, opts);
  return out;
}

}  // namespace

DetectionLoss detection_loss(const DetectionSet& predictions, const std::vector<ImageTargets>& gt,
                             const LossWeights& w, const DetLossOptions& opts, const LayerPrediction* encoder) {
  return detection_loss_impl(predictions, gt, nullptr, w, opts, encoder);
}

DetectionLoss detection_loss_fixed(const DetectionSet& predictions, const std::vector<ImageTargets>& gt,
                                   const std::vector<MatchResult>& matches, const LossWeights& w,
                                   const DetLossOptions& opts) {
  if (matches.size() != gt.size()) throw InputError("one matching per image is required");
  return detection_loss_impl(predictions, gt, &matches, w, opts, nullptr);
}

DenoisingGroup build_denoising_group(const ImageTargets& gt, int64_t groups, const DenoisingNoise& noise,
                                     int64_t num_classes, std::mt19937_64& rng) {
  DenoisingGroup g;
  g.groups = groups;
  g.gt_count = gt.size();
  const auto m = gt.size();
  const auto k = groups * m;
  g.labels = torch::empty({k}, torch::kInt64);
  g.boxes = torch::empty({k, 4}, torch::kFloat32);
  g.positive = torch::empty({k}, torch::kBool);
  g.group_of.resize(k);
  if (k == 0) return g;

  auto src_boxes = gt.boxes.detach().to(torch::kFloat64).contiguous();
  auto src_labels = gt.labels.to(torch::kInt64).contiguous();
  const auto* sb = src_boxes.data_ptr<double>();
  const auto* sl = src_labels.data_ptr<int64_t>();
  auto* lab = g.labels.data_ptr<int64_t>();
  auto* box = g.boxes.data_ptr<float>();
  auto* pos = g.positive.data_ptr<bool>();

  const double s = noise.box_scale;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int64_t> any_class(0, num_classes - 1);
  auto sign = [&] { return unit(rng) < 0.5 ? -1.0 : 1.0; };
  for (int64_t grp = 0; grp < groups; ++grp) {
    const bool positive = grp % 2 == 0;
    for (int64_t j = 0; j < m; ++j) {
      const auto q = grp * m + j;
      const double cx = sb[4 * j], cy = sb[4 * j + 1], w = sb[4 * j + 2], h = sb[4 * j + 3];
      // Positive jitter in [0, s); negative jitter in [s, 2s).
      auto magnitude = [&] { return s * (unit(rng) + (positive ? 0.0 : 1.0)); };
      const double ncx = cx + sign() * magnitude() * w;
      const double ncy = cy + sign() * magnitude() * h;
      const double nw = w * (1.0 + sign() * magnitude());
      const double nh = h * (1.0 + sign() * magnitude());
      double x0 = std::clamp(ncx - 0.5 * nw, 0.0, 1.0), x1 = std::clamp(ncx + 0.5 * nw, 0.0, 1.0);
      double y0 = std::clamp(ncy - 0.5 * nh, 0.0, 1.0), y1 = std::clamp(ncy + 0.5 * nh, 0.0, 1.0);
      constexpr double kMinSize = 1e-3;
      if (x1 - x0 < kMinSize) x1 = std::min(1.0, x0 + kMinSize), x0 = x1 - kMinSize;
      if (y1 - y0 < kMinSize) y1 = std::min(1.0, y0 + kMinSize), y0 = y1 - kMinSize;
      box[4 * q] = static_cast<float>(0.5 * (x0 + x1));
      box[4 * q + 1] = static_cast<float>(0.5 * (y0 + y1));
      box[4 * q + 2] = static_cast<float>(x1 - x0);
      box[4 * q + 3] = static_cast<float>(y1 - y0);
      lab[q] = (!positive && unit(rng) < noise.label_flip_prob) ? any_class(rng) : sl[j];
      pos[q] = positive;
      g.group_of[q] = j;
    }
  }
  return g;
}

DenoisingQueries pack_denoising(const std::vector<DenoisingGroup>& groups, int64_t num_groups, int64_t num_classes) {
  DenoisingQueries dn;
  dn.groups = num_groups;
  int64_t slots = 0;
  for (const auto& g : groups) slots = std::max(slots, g.gt_count);
  dn.group_size = slots;
  const auto b = static_cast<int64_t>(groups.size());
  const auto k = num_groups * slots;
  dn.labels = torch::full({b, k}, num_classes, torch::kInt64);
  dn.boxes = torch::full({b, k, 4}, 0.5f);
  dn.valid = torch::zeros({b, k}, torch::kBool);
  for (int64_t i = 0; i < b; ++i) {
    const auto& g = groups[i];
    const auto m = g.gt_count;
    if (m == 0) continue;
    for (int64_t grp = 0; grp < num_groups; ++grp) {
      dn.labels[i].narrow(0, grp * slots, m).copy_(g.labels.narrow(0, grp * m, m));
      dn.boxes[i].narrow(0, grp * slots, m).copy_(g.boxes.narrow(0, grp * m, m));
      dn.valid[i].narrow(0, grp * slots, m).fill_(true);
    }
  }
  return dn;
}

torch::Tensor denoising_loss(const DetectionSet& outputs, const DenoisingQueries& packed,
                             const std::vector<DenoisingGroup>& groups, const std::vector<ImageTargets>& gt,
                             const LossWeights& w, const DetLossOptions& opts) {
  if (outputs.per_layer.empty()) throw InputError("denoising outputs have no layers");
  const auto b = static_cast<int64_t>(groups.size());
  auto total = torch::zeros({}, outputs.per_layer.front().logits.options());
  if (b == 0) return total;
  const auto slots = packed.group_size;
  for (int64_t i = 0; i < b; ++i) {
    const auto& g = groups[i];
    const auto m = g.gt_count;
    if (m == 0) continue;
    std::vector<int64_t> pos_idx, pos_gt, neg_idx;
    auto positive = g.positive.contiguous();
    const auto* pos = positive.data_ptr<bool>();
    for (int64_t grp = 0; grp < g.groups; ++grp) {
      for (int64_t j = 0; j < m; ++j) {
        const auto q = grp * m + j;
        const auto slot = grp * slots + j;
        if (pos[q]) {
          pos_idx.push_back(slot);
          pos_gt.push_back(g.group_of[q]);
        } else {
          neg_idx.push_back(slot);
        }
      }
    }
    auto gsel = index_tensor(pos_gt);
    auto labels = gt[i].labels.index_select(0, gsel);
    auto boxes = gt[i].boxes.index_select(0, gsel);
    auto pidx = index_tensor(pos_idx);
    auto nidx = index_tensor(neg_idx);
    for (const auto& layer : outputs.per_layer)
      total = total + assigned_loss(layer.logits[i], layer.boxes[i], pidx, labels, boxes, nidx, w, opts);
  }
  return total / static_cast<double>(b);
}

torch::Tensor focal_loss(const torch::Tensor& logits, const torch::Tensor& target, double gamma, double alpha) {
  if (logits.sizes() != target.sizes()) throw InputError("focal loss: logits/target shape mismatch");
  auto t = target.to(logits.dtype());
  auto ce = F::binary_cross_entropy_with_logits(logits, t, F::BinaryCrossEntropyWithLogitsFuncOptions().reduction(torch::kNone));
  auto p = torch::sigmoid(logits);
  auto p_t = p * t + (1.0 - p) * (1.0 - t);
  auto alpha_t = alpha * t + (1.0 - alpha) * (1.0 - t);
  return (alpha_t * (1.0 - p_t).pow(gamma) * ce).mean();
}

torch::Tensor bce_loss(const torch::Tensor& logits, const torch::Tensor& target) {
  if (logits.sizes() != target.sizes()) throw InputError("BCE: logits/target shape mismatch");
  return F::binary_cross_entropy_with_logits(logits, target.to(logits.dtype()));
}

torch::Tensor tversky_loss(const torch::Tensor& probs, const torch::Tensor& target, double alpha, double beta,
                           double smooth) {
  if (probs.sizes() != target.sizes()) throw InputError("Tversky: probs/target shape mismatch");
  auto p = probs.flatten(1);
  auto t = target.to(probs.dtype()).flatten(1);
  auto tp = (p * t).sum(1);
  auto fp = (p * (1.0 - t)).sum(1);
  auto fn = ((1.0 - p) * t).sum(1);
  return (1.0 - (tp + smooth) / (tp + alpha * fp + beta * fn + smooth)).mean();
}

SegmentationLoss segmentation_losses(const torch::Tensor& da_logits, const torch::Tensor& da_gt,
                                     const torch::Tensor& ll_logits, const torch::Tensor& ll_gt,
                                     const LossWeights& w, const SegLossParams& p) {
  if (da_logits.sizes() != da_gt.sizes() || ll_logits.sizes() != ll_gt.sizes())
    throw InputError("segmentation logits and masks must have equal shapes");
  SegmentationLoss out;
  out.drivable = w.lambda_fl * focal_loss(da_logits, da_gt, p.focal_gamma, p.focal_alpha) +
                 w.lambda_bce * bce_loss(da_logits, da_gt);
  out.lane = w.lambda_fl * focal_loss(ll_logits, ll_gt, p.focal_gamma, p.focal_alpha) +
             w.lambda_tv * tversky_loss(torch::sigmoid(ll_logits), ll_gt, p.tversky_alpha, p.tversky_beta,
                                        p.tversky_smooth);
  return out;
}

torch::Tensor total_loss(const std::vector<std::pair<std::string, torch::Tensor>>& components) {
  torch::Tensor sum;
  for (const auto& [name, value] : components) {
    if (!value.defined()) continue;
    if (!torch::isfinite(value.detach()).all().item<bool>())
      throw TrainingAbort(name, "loss component '" + name + "' is not finite");
    sum = sum.defined() ? sum + value : value;
  }
  return sum.defined() ? sum : torch::zeros({});
}

}  // namespace rmtppad
