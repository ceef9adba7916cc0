#include "rmtppad/encoder.hpp"

#include <string>

#include "rmtppad/errors.hpp"

namespace rmtppad {

namespace F = torch::nn::functional;

void EncoderConfig::validate() const {
  if (input_height <= 0 || input_width <= 0 || input_height % 32 != 0 || input_width % 32 != 0) {
    throw ConfigError("input size must be a positive multiple of 32, got " +
                      std::to_string(input_height) + "x" + std::to_string(input_width));
  }
  if (channel_width <= 0 || attention_heads <= 0 || channel_width % attention_heads != 0) {
    throw ConfigError("channel_width must be divisible by attention_heads");
  }
  if (channel_width % 4 != 0) throw ConfigError("channel_width must be divisible by 4");
  for (auto w : backbone_widths)
    if (w <= 0) throw ConfigError("backbone widths must be positive");
  for (auto d : backbone_depths)
    if (d < 0) throw ConfigError("backbone depths must be non-negative");
  if (attention_layers < 0) throw ConfigError("attention_layers must be non-negative");
}

void FeaturePyramid::check() const {
  if (!s3.defined() || !s4.defined() || !s5.defined()) throw ShapeError("pyramid has undefined levels");
  if (s3.dim() != 4 || s4.dim() != 4 || s5.dim() != 4) throw ShapeError("pyramid levels must be [B,C,H,W]");
  if (s3.size(1) != s4.size(1) || s4.size(1) != s5.size(1))
    throw ShapeError("pyramid levels must share the channel width");
  if (s3.size(2) != 2 * s4.size(2) || s4.size(2) != 2 * s5.size(2) || s3.size(3) != 2 * s4.size(3) ||
      s4.size(3) != 2 * s5.size(3))
    throw ShapeError("pyramid spatial dims must halve per level");
}

namespace {

class ResBlockImpl : public torch::nn::Module {
 public:
  explicit ResBlockImpl(int64_t channels) {
    conv1 = register_module("conv1", ConvBnAct(channels, channels, 3));
    conv2 = register_module("conv2", ConvBnAct(channels, channels, 3, 1, 1, false));
  }
  torch::Tensor forward(const torch::Tensor& x) { return F::silu(x + conv2(conv1(x))); }

  ConvBnAct conv1{nullptr}, conv2{nullptr};
};
TORCH_MODULE(ResBlock);

}  // namespace

BackboneImpl::BackboneImpl(const EncoderConfig& cfg) {
  const auto stem_width = std::max<int64_t>(cfg.backbone_widths[0] / 2, 8);
  stem = register_module("stem", ConvBnAct(3, stem_width, 3, 2));
  stages = register_module("stages", torch::nn::ModuleList());
  int64_t in = stem_width;
  for (size_t i = 0; i < 4; ++i) {
    torch::nn::Sequential stage;
    stage->push_back(ConvBnAct(in, cfg.backbone_widths[i], 3, 2));
    for (int64_t d = 0; d < cfg.backbone_depths[i]; ++d) stage->push_back(ResBlock(cfg.backbone_widths[i]));
    stages->push_back(stage);
    in = cfg.backbone_widths[i];
  }
}

std::array<torch::Tensor, 3> BackboneImpl::forward(const torch::Tensor& image) {
  auto x = stem(image);
  std::array<torch::Tensor, 3> outs;
  for (size_t i = 0; i < 4; ++i) {
    x = stages[i]->as<torch::nn::Sequential>()->forward(x);
    if (i >= 1) outs[i - 1] = x;
  }
  return outs;
}

AifiImpl::AifiImpl(int64_t dim, int64_t heads, int64_t ffn_dim) : dim_(dim) {
  norm1 = register_module("norm1", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
  norm2 = register_module("norm2", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
  attn = register_module("attn", MultiHeadAttention(dim, heads));
  ffn1 = register_module("ffn1", torch::nn::Linear(dim, ffn_dim));
  ffn2 = register_module("ffn2", torch::nn::Linear(ffn_dim, dim));
}

torch::Tensor AifiImpl::forward(const torch::Tensor& s5) {
  const auto b = s5.size(0), c = s5.size(1), h = s5.size(2), w = s5.size(3);
  if (c != dim_) throw ShapeError("AIFI channel mismatch");
  auto tokens = s5.flatten(2).transpose(1, 2);  // [B, HW, C]
  auto pos = sincos_position_encoding_2d(h, w, c).to(s5.dtype()).to(s5.device()).unsqueeze(0);
  auto normed = norm1(tokens);
  auto qk = normed + pos;
  tokens = tokens + attn(qk, qk, normed);
  tokens = tokens + ffn2(F::gelu(ffn1(norm2(tokens))));
  return tokens.transpose(1, 2).reshape({b, c, h, w});
}

void AifiImpl::silence_residual_branches() {
  torch::NoGradGuard guard;
  attn->v_proj->weight.zero_();
  attn->v_proj->bias.zero_();
  attn->out_proj->bias.zero_();
  ffn2->weight.zero_();
  ffn2->bias.zero_();
}

FusionBlockImpl::FusionBlockImpl(int64_t in_channels, int64_t out_channels) {
  proj = register_module("proj", torch::nn::Conv2d(torch::nn::Conv2dOptions(in_channels, out_channels, 1)));
  refine = register_module("refine", ConvBnAct(out_channels, out_channels, 3));
}

torch::Tensor FusionBlockImpl::forward(const torch::Tensor& x) {
  auto y = proj(x);
  return y + refine(y);
}

CcfmImpl::CcfmImpl(int64_t c) {
  lateral5 = register_module("lateral5", ConvBnAct(c, c, 1));
  lateral4 = register_module("lateral4", ConvBnAct(c, c, 1));
  fuse_td4 = register_module("fuse_td4", FusionBlock(2 * c, c));
  fuse_td3 = register_module("fuse_td3", FusionBlock(2 * c, c));
  down3 = register_module("down3", ConvBnAct(c, c, 3, 2));
  down4 = register_module("down4", ConvBnAct(c, c, 3, 2));
  fuse_bu4 = register_module("fuse_bu4", FusionBlock(2 * c, c));
  fuse_bu5 = register_module("fuse_bu5", FusionBlock(2 * c, c));
}

FeaturePyramid CcfmImpl::forward(const FeaturePyramid& in) {
  in.check();
  auto up = [](const torch::Tensor& x) {
    return F::interpolate(x, F::InterpolateFuncOptions()
                                 .scale_factor(std::vector<double>{2.0, 2.0})
                                 .mode(torch::kNearest));
  };
  auto td4 = fuse_td4(torch::cat({up(lateral5(in.s5)), in.s4}, 1));
  auto td3 = fuse_td3(torch::cat({up(lateral4(td4)), in.s3}, 1));
  auto bu4 = fuse_bu4(torch::cat({down3(td3), td4}, 1));
  auto bu5 = fuse_bu5(torch::cat({down4(bu4), in.s5}, 1));
  return {td3, bu4, bu5};
}

void CcfmImpl::set_identity_passthrough() {
  torch::NoGradGuard guard;
  for (auto* m : {&lateral5, &lateral4, &down3, &down4}) {
    (*m)->conv->weight.zero_();
    (*m)->bn->bias.zero_();
    (*m)->bn->reset_running_stats();
  }
  for (auto* f : {&fuse_td4, &fuse_td3, &fuse_bu4, &fuse_bu5}) {
    auto& w = (*f)->proj->weight;  // [C, 2C, 1, 1]
    const auto c = w.size(0);
    w.zero_();
    (*f)->proj->bias.zero_();
    w.narrow(1, c, c).squeeze(-1).squeeze(-1).copy_(torch::eye(c, w.options()));
    (*f)->refine->conv->weight.zero_();
    (*f)->refine->bn->bias.zero_();
    (*f)->refine->bn->reset_running_stats();
  }
}

HybridEncoderImpl::HybridEncoderImpl(const EncoderConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  backbone = register_module("backbone", Backbone(cfg_));
  input_proj = register_module("input_proj", torch::nn::ModuleList());
  for (size_t i = 1; i < 4; ++i)
    input_proj->push_back(ConvBnAct(cfg_.backbone_widths[i], cfg_.channel_width, 1, 1, 1, false));
  aifi = register_module("aifi", torch::nn::ModuleList());
  for (int64_t i = 0; i < cfg_.attention_layers; ++i)
    aifi->push_back(Aifi(cfg_.channel_width, cfg_.attention_heads, cfg_.channel_width * cfg_.ffn_multiplier));
  ccfm = register_module("ccfm", Ccfm(cfg_.channel_width));
}

FeaturePyramid HybridEncoderImpl::extract_pyramid(const torch::Tensor& image) {
  auto x = image.dim() == 3 ? image.unsqueeze(0) : image;
  if (x.dim() != 4 || x.size(1) != 3 || x.size(2) != cfg_.input_height || x.size(3) != cfg_.input_width) {
    throw ShapeError("image must be [3," + std::to_string(cfg_.input_height) + "," +
                     std::to_string(cfg_.input_width) + "], got " + std::to_string(x.size(-2)) + "x" +
                     std::to_string(x.size(-1)));
  }
  auto feats = backbone(x);
  FeaturePyramid p;
  p.s3 = input_proj[0]->as<ConvBnAct>()->forward(feats[0]);
  p.s4 = input_proj[1]->as<ConvBnAct>()->forward(feats[1]);
  p.s5 = input_proj[2]->as<ConvBnAct>()->forward(feats[2]);
  return p;
}

torch::Tensor HybridEncoderImpl::aifi_forward(const torch::Tensor& s5) {
  auto x = s5;
  for (const auto& layer : *aifi) x = layer->as<Aifi>()->forward(x);
  return x;
}

FeaturePyramid HybridEncoderImpl::ccfm_fuse(const FeaturePyramid& pyramid) { return ccfm(pyramid); }

FeaturePyramid HybridEncoderImpl::forward(const torch::Tensor& image) {
  auto p = extract_pyramid(image);
  p.s5 = aifi_forward(p.s5);
  return ccfm_fuse(p);
}

}  // namespace rmtppad
