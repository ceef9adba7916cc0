#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "rmtppad/det_decoder.hpp"

namespace rmtppad {

/// Loss coefficients. Defaults are the reference operating point.
struct LossWeights {
  double alpha = 1.0;       // classification
  double beta = 5.0;        // L1 box
  double gamma = 2.0;       // GIoU
  double lambda_fl = 24.0;  // focal
  double lambda_bce = 8.0;  // BCE (drivable)
  double lambda_tv = 8.0;   // Tversky (lane)

  void validate() const;
};

struct SegLossParams {
  double focal_gamma = 2.0;
  double focal_alpha = 0.25;
  double tversky_alpha = 0.3;  // false-positive weight
  double tversky_beta = 0.7;   // false-negative weight
  double tversky_smooth = 1.0;
};

struct DetLossOptions {
  /// Matched classification target is the detached IoU (varifocal); otherwise 1.
  bool iou_aware_cls = true;
  double vfl_alpha = 0.75;
  double vfl_gamma = 2.0;
  /// Also supervise the query-selection head's top-N proposals.
  bool encoder_loss = true;
};

/// Ground truth for one image: labels [M] int64, boxes [M, 4] normalized cxcywh.
struct ImageTargets {
  torch::Tensor labels;
  torch::Tensor boxes;

  int64_t size() const { return labels.defined() ? labels.size(0) : 0; }
};

/// Optimal one-to-one matching: gt index j -> prediction assignment[j].
struct MatchResult {
  std::vector<int64_t> assignment;
  std::vector<int64_t> unmatched;  // ascending prediction indices
  double cost = 0.0;
};

/// Matching cost matrix [M, N]: alpha * (-p_class) + beta * L1 + gamma * (1 - GIoU).
torch::Tensor matching_cost(const torch::Tensor& logits, const torch::Tensor& boxes, const ImageTargets& gt,
                            const LossWeights& w);

/// Hungarian matching for one image. Throws InfeasibleError when M > N.
MatchResult hungarian_match(const torch::Tensor& logits, const torch::Tensor& boxes, const ImageTargets& gt,
                            const LossWeights& w);

/// Matched classification + box + unmatched classification terms for one
/// image under a fixed matching. The unmatched term is 0 when N == M.
torch::Tensor core_loss(const torch::Tensor& logits, const torch::Tensor& boxes, const ImageTargets& gt,
                        const MatchResult& match, const LossWeights& w, const DetLossOptions& opts = {});

struct DetectionLoss {
  torch::Tensor core;     // final layer
  torch::Tensor aux;      // sum over the first L-1 layers
  torch::Tensor encoder;  // query-selection proposals (0 when disabled)
  int64_t aux_layers = 0;

  torch::Tensor total() const { return core + aux + encoder; }
};

/// Bipartite-matching detection loss over a batch (images averaged); every
/// layer is matched independently. `encoder` may be null.
DetectionLoss detection_loss(const DetectionSet& predictions, const std::vector<ImageTargets>& gt,
                             const LossWeights& w, const DetLossOptions& opts = {},
                             const LayerPrediction* encoder = nullptr);

/// Same as detection_loss but with a caller-supplied matching per image for
/// every layer (used for gradient checks).
DetectionLoss detection_loss_fixed(const DetectionSet& predictions, const std::vector<ImageTargets>& gt,
                                   const std::vector<MatchResult>& matches, const LossWeights& w,
                                   const DetLossOptions& opts = {});

struct DenoisingNoise {
  double box_scale = 0.5;
  double label_flip_prob = 0.5;
};

/// K = G * M noisy copies of one image's ground truth. Group g covers entries
/// [g*M, (g+1)*M) and entry g*M + j is statically assigned to gt j. Even groups
/// are positive (supervised towards their gt), odd groups negative (pushed to
/// background, with larger box noise and label flips).
struct DenoisingGroup {
  torch::Tensor labels;    // [K] int64
  torch::Tensor boxes;     // [K, 4] cxcywh
  torch::Tensor positive;  // [K] bool
  std::vector<int64_t> group_of;  // query -> gt index
  int64_t groups = 0;
  int64_t gt_count = 0;

  int64_t size() const { return static_cast<int64_t>(group_of.size()); }
};

DenoisingGroup build_denoising_group(const ImageTargets& gt, int64_t groups, const DenoisingNoise& noise,
                                     int64_t num_classes, std::mt19937_64& rng);

/// Pads per-image groups to a common slot count so they can be batched.
DenoisingQueries pack_denoising(const std::vector<DenoisingGroup>& groups, int64_t num_groups, int64_t num_classes);

/// Static-assignment version of the detection loss over all decoder layers.
/// Images with no ground truth contribute 0.
torch::Tensor denoising_loss(const DetectionSet& outputs, const DenoisingQueries& packed,
                             const std::vector<DenoisingGroup>& groups, const std::vector<ImageTargets>& gt,
                             const LossWeights& w, const DetLossOptions& opts = {});

/// Mean over pixels of -alpha_t (1 - p_t)^gamma log p_t, computed from logits.
torch::Tensor focal_loss(const torch::Tensor& logits, const torch::Tensor& target, double gamma, double alpha);

/// Mean binary cross-entropy from logits.
torch::Tensor bce_loss(const torch::Tensor& logits, const torch::Tensor& target);

/// 1 - (TP + s) / (TP + a*FP + b*FN + s) with soft counts, averaged over the
/// leading batch dimension. `probs` and `target` are [B, ...].
torch::Tensor tversky_loss(const torch::Tensor& probs, const torch::Tensor& target, double alpha, double beta,
                           double smooth);

struct SegmentationLoss {
  torch::Tensor drivable;  // lambda_fl * FL + lambda_bce * BCE
  torch::Tensor lane;      // lambda_fl * FL + lambda_tv * TV
};

SegmentationLoss segmentation_losses(const torch::Tensor& da_logits, const torch::Tensor& da_gt,
                                     const torch::Tensor& ll_logits, const torch::Tensor& ll_gt,
                                     const LossWeights& w, const SegLossParams& p = {});

/// Plain sum of the task losses; undefined tensors are skipped. Throws
/// TrainingAbort naming the first non-finite component.
torch::Tensor total_loss(const std::vector<std::pair<std::string, torch::Tensor>>& components);

}  // namespace rmtppad
