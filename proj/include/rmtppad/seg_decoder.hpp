#pragma once

#include <torch/torch.h>

#include <utility>

#include "rmtppad/encoder.hpp"
#include "rmtppad/layers.hpp"

namespace rmtppad {

/// Segmentation tasks, in ScaleWeights row order.
enum class SegTask : int64_t { drivable = 0, lane = 1 };
inline constexpr int64_t kSegTasks = 2;
inline constexpr int64_t kSegScales = 3;

/// Learnable task x scale logits; weights are the row-wise softmax.
class ScaleWeightsImpl : public torch::nn::Module {
 public:
  ScaleWeightsImpl();
  torch::Tensor weights() const { return torch::softmax(logits, 1); }

  torch::Tensor logits;  // [2, 3] rows {drivable, lane}, cols {S3, S4, F5}
};
TORCH_MODULE(ScaleWeights);

struct SegDecoderConfig {
  int64_t in_channels = 256;
  int64_t proj_channels = 64;
};

/// Per-task logits at full input resolution, each [B, 1, H, W].
struct SegLogits {
  torch::Tensor drivable;
  torch::Tensor lane;
};

struct SegThresholds {
  double drivable = 0.45;
  double lane = 0.9;

  /// Throws ConfigError unless both thresholds lie strictly inside (0, 1).
  void validate() const;
};

struct SegMasks {
  torch::Tensor drivable_prob;  // [B, H, W] float
  torch::Tensor lane_prob;
  torch::Tensor drivable_mask;  // [B, H, W] bool, prob >= threshold
  torch::Tensor lane_mask;
  SegThresholds thresholds;
};

/// Unified adaptive decoder: per-scale 1x1 projection, bilinear alignment to the
/// S3 grid, softmax-weighted scale fusion per task, a shared 8x transposed-conv
/// trunk and one refinement head per task.
class SegDecoderImpl : public torch::nn::Module {
 public:
  explicit SegDecoderImpl(const SegDecoderConfig& cfg);

  /// [B, 3, C', H/8, W/8] with scales ordered S3, S4, F5.
  torch::Tensor project_align_stack(const FeaturePyramid& pyramid);

  /// sum_k weights[task, k] * stacked[:, k]. `task` must be 0 (drivable) or 1 (lane).
  torch::Tensor fuse_scales(const torch::Tensor& stacked, int64_t task);

  /// Three stride-2 transposed convs then the task's refinement head: [B, 1, H, W].
  torch::Tensor upsample_refine(const torch::Tensor& fused, int64_t task);

  SegLogits forward(const FeaturePyramid& pyramid);

  ScaleWeights scale_weights{nullptr};
  torch::nn::ModuleList proj;
  torch::nn::Sequential trunk{nullptr};
  torch::nn::ModuleList heads;

 private:
  torch::Tensor run_trunk(const torch::Tensor& fused);
  torch::Tensor run_head(const torch::Tensor& up, int64_t task);
  SegDecoderConfig cfg_;
};
TORCH_MODULE(SegDecoder);

/// Sigmoid + threshold (prob >= t is foreground).
SegMasks predict_masks(const SegLogits& logits, const SegThresholds& thresholds);

}  // namespace rmtppad
