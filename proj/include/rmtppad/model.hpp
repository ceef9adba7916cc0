#pragma once

#include <torch/torch.h>

#include <optional>
#include <string>
#include <vector>

#include "rmtppad/config.hpp"
#include "rmtppad/det_decoder.hpp"
#include "rmtppad/encoder.hpp"
#include "rmtppad/gca.hpp"
#include "rmtppad/seg_decoder.hpp"

namespace rmtppad {

struct ModelOutput {
  FeaturePyramid shared;
  std::optional<DecoderOutput> detection;
  std::optional<SegLogits> segmentation;
};

/// Shared hybrid encoder feeding a detection branch and a segmentation branch.
/// With GCA enabled each branch gets its own GCA per scale (S3, S4, F5);
/// without it both branches read the shared pyramid directly.
///
/// Parameter name prefixes: "encoder.", "gca_det.<k>.", "gca_seg.<k>.",
/// "det_decoder.", "seg_decoder.".
class RmtPpadImpl : public torch::nn::Module {
 public:
  explicit RmtPpadImpl(const ModelConfig& cfg);

  /// `images` is [B, 3, H, W] float in [0, 1].
  ModelOutput forward(const torch::Tensor& images, const DenoisingQueries* denoising = nullptr);

  /// Pyramid a branch sees for the given shared features.
  FeaturePyramid detection_features(const FeaturePyramid& shared);
  FeaturePyramid segmentation_features(const FeaturePyramid& shared);

  /// Backbone + hybrid encoder parameters, in registration order.
  std::vector<torch::Tensor> shared_parameters() const;

  const ModelConfig& config() const { return cfg_; }

  HybridEncoder encoder{nullptr};
  torch::nn::ModuleList gca_det{nullptr}, gca_seg{nullptr};
  DetDecoder det_decoder{nullptr};
  SegDecoder seg_decoder{nullptr};

 private:
  FeaturePyramid apply_gca(torch::nn::ModuleList& gcas, const FeaturePyramid& shared);
  ModelConfig cfg_;
};
TORCH_MODULE(RmtPpad);

/// True when a hierarchical parameter name belongs to a GCA module.
bool is_gca_parameter(const std::string& name);

}  // namespace rmtppad
