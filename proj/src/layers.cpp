#include "rmtppad/layers.hpp"

#include <cmath>

#include "rmtppad/errors.hpp"

namespace rmtppad {

namespace F = torch::nn::functional;

ConvBnActImpl::ConvBnActImpl(int64_t in_channels, int64_t out_channels, int64_t kernel,
                             int64_t stride, int64_t groups, bool activate)
    : activate_(activate) {
  conv = register_module("conv", torch::nn::Conv2d(torch::nn::Conv2dOptions(in_channels, out_channels, kernel)
                                                       .stride(stride)
                                                       .padding((kernel - 1) / 2)
                                                       .groups(groups)
                                                       .bias(false)));
  bn = register_module("bn", torch::nn::BatchNorm2d(out_channels));
}

torch::Tensor ConvBnActImpl::forward(const torch::Tensor& x) {
  auto y = bn->forward(conv->forward(x));
  return activate_ ? F::silu(y) : y;
}

MultiHeadAttentionImpl::MultiHeadAttentionImpl(int64_t dim, int64_t heads) : heads_(heads) {
  if (dim % heads != 0) throw ConfigError("attention dim must be divisible by the head count");
  q_proj = register_module("q_proj", torch::nn::Linear(dim, dim));
  k_proj = register_module("k_proj", torch::nn::Linear(dim, dim));
  v_proj = register_module("v_proj", torch::nn::Linear(dim, dim));
  out_proj = register_module("out_proj", torch::nn::Linear(dim, dim));
}

torch::Tensor MultiHeadAttentionImpl::forward(const torch::Tensor& query, const torch::Tensor& key,
                                              const torch::Tensor& value,
                                              const torch::Tensor& attn_mask) {
  const auto b = query.size(0);
  const auto nq = query.size(1);
  const auto nk = key.size(1);
  const auto dim = query.size(2);
  const auto hd = dim / heads_;
  auto q = q_proj->forward(query).view({b, nq, heads_, hd}).transpose(1, 2);
  auto k = k_proj->forward(key).view({b, nk, heads_, hd}).transpose(1, 2);
  auto v = v_proj->forward(value).view({b, nk, heads_, hd}).transpose(1, 2);
  auto logits = torch::matmul(q, k.transpose(-2, -1)) / std::sqrt(static_cast<double>(hd));
  if (attn_mask.defined()) logits = logits + attn_mask;
  auto attn = torch::softmax(logits, -1);
  auto out = torch::matmul(attn, v).transpose(1, 2).reshape({b, nq, dim});
  return out_proj->forward(out);
}

MlpImpl::MlpImpl(int64_t in_dim, int64_t hidden_dim, int64_t out_dim, int64_t layers) {
  linears = register_module("layers", torch::nn::ModuleList());
  for (int64_t i = 0; i < layers; ++i) {
    const auto in = i == 0 ? in_dim : hidden_dim;
    const auto out = i == layers - 1 ? out_dim : hidden_dim;
    linears->push_back(torch::nn::Linear(in, out));
  }
}

torch::Tensor MlpImpl::forward(torch::Tensor x) {
  const auto n = static_cast<int64_t>(linears->size());
  for (int64_t i = 0; i < n; ++i) {
    x = linears[i]->as<torch::nn::Linear>()->forward(x);
    if (i < n - 1) x = torch::relu(x);
  }
  return x;
}

torch::Tensor sincos_position_encoding_2d(int64_t height, int64_t width, int64_t dim,
                                          double temperature) {
  if (dim % 4 != 0) throw ConfigError("position encoding dim must be divisible by 4");
  auto gy = torch::arange(height, torch::kFloat32);
  auto gx = torch::arange(width, torch::kFloat32);
  auto grids = torch::meshgrid({gy, gx}, "ij");
  auto ys = grids[0].flatten().unsqueeze(1);
  auto xs = grids[1].flatten().unsqueeze(1);
  const auto quarter = dim / 4;
  auto omega = torch::arange(quarter, torch::kFloat32) / static_cast<double>(quarter);
  omega = 1.0 / torch::pow(temperature, omega);
  auto ox = xs * omega.unsqueeze(0);
  auto oy = ys * omega.unsqueeze(0);
  return torch::cat({ox.sin(), ox.cos(), oy.sin(), oy.cos()}, 1);
}

torch::Tensor inverse_sigmoid(const torch::Tensor& x, double eps) {
  auto c = x.clamp(0.0, 1.0);
  return torch::log(c.clamp_min(eps) / (1.0 - c).clamp_min(eps));
}

torch::Tensor resize_bilinear(const torch::Tensor& x, int64_t height, int64_t width) {
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .size(std::vector<int64_t>{height, width})
                               .mode(torch::kBilinear)
                               .align_corners(false));
}

}  // namespace rmtppad
