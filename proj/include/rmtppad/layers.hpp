#pragma once

#include <torch/torch.h>

namespace rmtppad {

/// Conv2d + BatchNorm + optional SiLU, the basic block used throughout the network.
class ConvBnActImpl : public torch::nn::Module {
 public:
  ConvBnActImpl(int64_t in_channels, int64_t out_channels, int64_t kernel, int64_t stride = 1,
                int64_t groups = 1, bool activate = true);

  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::Conv2d conv{nullptr};
  torch::nn::BatchNorm2d bn{nullptr};

 private:
  bool activate_;
};
TORCH_MODULE(ConvBnAct);

/// Multi-head attention with separate query/key/value projections.
///
/// `attn_mask` is additive and broadcast to [batch, heads, queries, keys]; use
/// -inf entries to block attention.
class MultiHeadAttentionImpl : public torch::nn::Module {
 public:
  MultiHeadAttentionImpl(int64_t dim, int64_t heads);

  torch::Tensor forward(const torch::Tensor& query, const torch::Tensor& key,
                        const torch::Tensor& value, const torch::Tensor& attn_mask = {});

  torch::nn::Linear q_proj{nullptr}, k_proj{nullptr}, v_proj{nullptr}, out_proj{nullptr};

 private:
  int64_t heads_;
};
TORCH_MODULE(MultiHeadAttention);

/// Small MLP: Linear -> ReLU -> ... -> Linear.
class MlpImpl : public torch::nn::Module {
 public:
  MlpImpl(int64_t in_dim, int64_t hidden_dim, int64_t out_dim, int64_t layers);
  torch::Tensor forward(torch::Tensor x);

  torch::nn::ModuleList linears;
};
TORCH_MODULE(Mlp);

/// 2D sine-cosine position encoding for a height x width grid, returned as [H*W, dim]
/// in row-major token order. `dim` must be divisible by 4.
torch::Tensor sincos_position_encoding_2d(int64_t height, int64_t width, int64_t dim,
                                          double temperature = 10000.0);

torch::Tensor inverse_sigmoid(const torch::Tensor& x, double eps = 1e-5);

/// Bilinear resize with half-pixel centers (align_corners = false).
torch::Tensor resize_bilinear(const torch::Tensor& x, int64_t height, int64_t width);

}  // namespace rmtppad
