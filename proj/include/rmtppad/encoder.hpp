#pragma once

#include <torch/torch.h>

#include <array>
#include <cstdint>

#include "rmtppad/layers.hpp"

namespace rmtppad {

struct EncoderConfig {
  int64_t input_height = 640;
  int64_t input_width = 640;
  int64_t channel_width = 256;
  std::array<int64_t, 4> backbone_widths{32, 64, 128, 256};
  std::array<int64_t, 4> backbone_depths{1, 1, 1, 1};
  int64_t attention_heads = 8;
  int64_t attention_layers = 1;
  int64_t ffn_multiplier = 4;

  /// Throws ConfigError unless sizes are multiples of 32 and the width splits over heads.
  void validate() const;
};

/// Three feature maps at strides 8/16/32, all with the same channel count.
/// Tensors are batched: [B, C, H/k, W/k].
struct FeaturePyramid {
  torch::Tensor s3;
  torch::Tensor s4;
  torch::Tensor s5;

  /// Throws ShapeError unless channels match and spatial dims halve per level.
  void check() const;
};

/// Four-stage strided convolutional backbone. Stage k downsamples by 2 and runs
/// `depth` residual 3x3 blocks; stages 2-4 are the stride-8/16/32 outputs.
class BackboneImpl : public torch::nn::Module {
 public:
  explicit BackboneImpl(const EncoderConfig& cfg);
  std::array<torch::Tensor, 3> forward(const torch::Tensor& image);

 private:
  ConvBnAct stem{nullptr};
  torch::nn::ModuleList stages;
  std::vector<int64_t> depths_;
};
TORCH_MODULE(Backbone);

/// One pre-norm transformer encoder layer applied to the flattened deepest map.
class AifiImpl : public torch::nn::Module {
 public:
  AifiImpl(int64_t dim, int64_t heads, int64_t ffn_dim);
  torch::Tensor forward(const torch::Tensor& s5);

  /// Zero the value projection and every residual-branch output so forward()
  /// returns its input unchanged.
  void silence_residual_branches();

  torch::nn::LayerNorm norm1{nullptr}, norm2{nullptr};
  MultiHeadAttention attn{nullptr};
  torch::nn::Linear ffn1{nullptr}, ffn2{nullptr};

 private:
  int64_t dim_;
};
TORCH_MODULE(Aifi);

/// Merges a concatenated pair of maps: y = proj(concat); out = y + SiLU(BN(conv3x3(y))).
class FusionBlockImpl : public torch::nn::Module {
 public:
  FusionBlockImpl(int64_t in_channels, int64_t out_channels);
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::Conv2d proj{nullptr};
  ConvBnAct refine{nullptr};
};
TORCH_MODULE(FusionBlock);

/// Cross-scale fusion: top-down (upsample x2 + concat + fuse) then bottom-up
/// (stride-2 conv + concat + fuse). Shapes are preserved at every scale.
class CcfmImpl : public torch::nn::Module {
 public:
  explicit CcfmImpl(int64_t channels);
  FeaturePyramid forward(const FeaturePyramid& in);

  /// Configure so that output equals input: lateral/downsample convs zeroed,
  /// fusion projections select the skip input, refinement branches silenced.
  void set_identity_passthrough();

  ConvBnAct lateral5{nullptr}, lateral4{nullptr};
  FusionBlock fuse_td4{nullptr}, fuse_td3{nullptr};
  ConvBnAct down3{nullptr}, down4{nullptr};
  FusionBlock fuse_bu4{nullptr}, fuse_bu5{nullptr};
};
TORCH_MODULE(Ccfm);

/// Backbone + projection to the shared width + AIFI + CCFM.
class HybridEncoderImpl : public torch::nn::Module {
 public:
  explicit HybridEncoderImpl(const EncoderConfig& cfg);

  /// Backbone features projected to channel_width, before AIFI/CCFM.
  FeaturePyramid extract_pyramid(const torch::Tensor& image);
  torch::Tensor aifi_forward(const torch::Tensor& s5);
  FeaturePyramid ccfm_fuse(const FeaturePyramid& pyramid);

  /// Full encoder: extract -> AIFI on s5 -> CCFM.
  FeaturePyramid forward(const torch::Tensor& image);

  const EncoderConfig& config() const { return cfg_; }

  Backbone backbone{nullptr};
  torch::nn::ModuleList input_proj;
  torch::nn::ModuleList aifi;
  Ccfm ccfm{nullptr};

 private:
  EncoderConfig cfg_;
};
TORCH_MODULE(HybridEncoder);

}  // namespace rmtppad
