#pragma once

#include <torch/torch.h>

#include <optional>
#include <utility>
#include <vector>

#include "rmtppad/encoder.hpp"
#include "rmtppad/layers.hpp"

namespace rmtppad {

struct DetDecoderConfig {
  int64_t hidden_dim = 256;
  int64_t num_queries = 300;
  int64_t num_layers = 6;
  int64_t num_classes = 1;
  int64_t heads = 8;
  int64_t points_per_level = 4;
  int64_t ffn_dim = 1024;

  void validate() const;
};

/// Flattened multi-scale memory. Tokens are S3 row-major, then S4, then S5.
struct TokenSequence {
  torch::Tensor tokens;  // [B, T, C]
  std::vector<std::pair<int64_t, int64_t>> shapes;  // (H, W) per level
  std::vector<int64_t> level_start;

  int64_t total() const;
};

TokenSequence flatten_concat(const FeaturePyramid& pyramid);

/// Inverse of flatten_concat.
FeaturePyramid unflatten(const TokenSequence& seq);

/// Top-N token selection. Ties are broken by lower flattened index.
struct QuerySelection {
  torch::Tensor indices;  // [B, N] int64
  torch::Tensor scores;   // [B, N]
};

/// `scores` is [B, T]; throws ConfigError if N > T.
QuerySelection select_top_queries(const torch::Tensor& scores, int64_t n);

/// Boxes are normalized cxcywh in (0, 1); logits are raw class scores.
struct LayerPrediction {
  torch::Tensor logits;  // [B, Q, C_cls]
  torch::Tensor boxes;   // [B, Q, 4]
};

/// Fixed-size prediction set with every decoder layer retained; the last
/// entry of `per_layer` is the final prediction.
struct DetectionSet {
  std::vector<LayerPrediction> per_layer;

  const LayerPrediction& final_layer() const { return per_layer.back(); }
};

/// Queries fed to the decoder alongside the selected object queries for
/// denoising training. Tensors are padded per batch to the same count;
/// `valid` marks real queries.
struct DenoisingQueries {
  torch::Tensor labels;  // [B, K] int64 (num_classes for padding)
  torch::Tensor boxes;   // [B, K, 4] noisy cxcywh
  torch::Tensor valid;   // [B, K] bool
  int64_t groups = 0;
  int64_t group_size = 0;  // padded per-group slot count (max M in batch)

  int64_t size() const { return labels.defined() ? labels.size(1) : 0; }
};

struct DecoderOutput {
  DetectionSet main;
  LayerPrediction encoder;  // query-selection head on the selected tokens
  QuerySelection selection;
  std::optional<DetectionSet> denoising;
};

/// Multi-scale deformable attention: each query samples `points` locations per
/// level around its reference box and mixes them with learned weights.
class MsDeformableAttentionImpl : public torch::nn::Module {
 public:
  MsDeformableAttentionImpl(int64_t dim, int64_t heads, int64_t levels, int64_t points);

  torch::Tensor forward(const torch::Tensor& query, const torch::Tensor& reference_boxes,
                        const TokenSequence& memory);

  torch::nn::Linear sampling_offsets{nullptr}, attention_weights{nullptr};
  torch::nn::Linear value_proj{nullptr}, output_proj{nullptr};

 private:
  void reset_parameters();
  int64_t dim_, heads_, levels_, points_;
};
TORCH_MODULE(MsDeformableAttention);

class DecoderLayerImpl : public torch::nn::Module {
 public:
  DecoderLayerImpl(int64_t dim, int64_t heads, int64_t levels, int64_t points, int64_t ffn_dim);

  torch::Tensor forward(const torch::Tensor& target, const torch::Tensor& reference_boxes,
                        const TokenSequence& memory, const torch::Tensor& attn_mask,
                        const torch::Tensor& query_pos);

  MultiHeadAttention self_attn{nullptr};
  torch::nn::LayerNorm norm1{nullptr}, norm2{nullptr}, norm3{nullptr};
  MsDeformableAttention cross_attn{nullptr};
  torch::nn::Linear ffn1{nullptr}, ffn2{nullptr};
};
TORCH_MODULE(DecoderLayer);

/// Query-based detection decoder: token flattening, query selection, then L
/// refinement layers each emitting boxes and class logits. No NMS.
class DetDecoderImpl : public torch::nn::Module {
 public:
  explicit DetDecoderImpl(const DetDecoderConfig& cfg);

  DecoderOutput forward(const FeaturePyramid& pyramid, const DenoisingQueries* denoising = nullptr);

  const DetDecoderConfig& config() const { return cfg_; }

  torch::nn::Linear enc_output{nullptr};
  torch::nn::LayerNorm enc_norm{nullptr};
  torch::nn::Linear enc_score_head{nullptr};
  Mlp enc_bbox_head{nullptr};
  Mlp query_pos_head{nullptr};
  torch::nn::Embedding level_embed{nullptr};
  torch::nn::Embedding denoising_class_embed{nullptr};
  torch::nn::ModuleList layers, score_heads, bbox_heads;

 private:
  DetDecoderConfig cfg_;
};
TORCH_MODULE(DetDecoder);

/// Per-token anchors in logit space ([1, T, 4]) and a validity mask ([1, T, 1]).
std::pair<torch::Tensor, torch::Tensor> generate_anchors(const std::vector<std::pair<int64_t, int64_t>>& shapes,
                                                         double base_size = 0.05);

/// Additive self-attention mask over [denoising queries | object queries]:
/// object queries cannot see denoising queries, and denoising groups cannot see
/// each other. Padding slots are hidden as keys. Returns [B, 1, Q, Q].
torch::Tensor build_denoising_attention_mask(const DenoisingQueries& dn, int64_t num_queries);

}  // namespace rmtppad
