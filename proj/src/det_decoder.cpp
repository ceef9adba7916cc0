#include "rmtppad/det_decoder.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "rmtppad/errors.hpp"

namespace rmtppad {

namespace F = torch::nn::functional;

void DetDecoderConfig::validate() const {
  if (hidden_dim <= 0 || heads <= 0 || hidden_dim % heads != 0)
    throw ConfigError("decoder hidden_dim must be divisible by heads");
  if (num_queries <= 0) throw ConfigError("num_queries must be positive");
  if (num_layers <= 0) throw ConfigError("decoder needs at least one layer");
  if (num_classes <= 0) throw ConfigError("num_classes must be positive");
  if (points_per_level <= 0) throw ConfigError("points_per_level must be positive");
}

int64_t TokenSequence::total() const { return tokens.defined() ? tokens.size(1) : 0; }

TokenSequence flatten_concat(const FeaturePyramid& pyramid) {
  pyramid.check();
  TokenSequence seq;
  std::vector<torch::Tensor> parts;
  int64_t start = 0;
  for (const auto* level : {&pyramid.s3, &pyramid.s4, &pyramid.s5}) {
    const auto h = level->size(2), w = level->size(3);
    seq.shapes.emplace_back(h, w);
    seq.level_start.push_back(start);
    start += h * w;
    parts.push_back(level->flatten(2).transpose(1, 2));
  }
  seq.tokens = torch::cat(parts, 1);
  return seq;
}

FeaturePyramid unflatten(const TokenSequence& seq) {
  if (seq.shapes.size() != 3) throw ShapeError("token sequence must hold three levels");
  std::array<torch::Tensor, 3> maps;
  const auto b = seq.tokens.size(0), c = seq.tokens.size(2);
  for (size_t l = 0; l < 3; ++l) {
    const auto [h, w] = seq.shapes[l];
    maps[l] = seq.tokens.narrow(1, seq.level_start[l], h * w).transpose(1, 2).reshape({b, c, h, w});
  }
  return {maps[0], maps[1], maps[2]};
}

QuerySelection select_top_queries(const torch::Tensor& scores, int64_t n) {
  if (scores.dim() != 2) throw ShapeError("selection scores must be [B, T]");
  if (n > scores.size(1) || n <= 0)
    throw ConfigError("cannot select " + std::to_string(n) + " queries from " + std::to_string(scores.size(1)) +
                      " tokens");
  auto sorted = scores.sort(/*stable=*/true, /*dim=*/1, /*descending=*/true);
  QuerySelection sel;
  sel.scores = std::get<0>(sorted).narrow(1, 0, n);
  sel.indices = std::get<1>(sorted).narrow(1, 0, n);
  return sel;
}

std::pair<torch::Tensor, torch::Tensor> generate_anchors(const std::vector<std::pair<int64_t, int64_t>>& shapes,
                                                         double base_size) {
  std::vector<torch::Tensor> anchors;
  for (size_t l = 0; l < shapes.size(); ++l) {
    const auto [h, w] = shapes[l];
    auto grids = torch::meshgrid({torch::arange(h, torch::kFloat32), torch::arange(w, torch::kFloat32)}, "ij");
    auto cx = (grids[1] + 0.5) / static_cast<double>(w);
    auto cy = (grids[0] + 0.5) / static_cast<double>(h);
    auto wh = torch::full_like(cx, base_size * std::pow(2.0, static_cast<double>(l)));
    anchors.push_back(torch::stack({cx, cy, wh, wh}, -1).reshape({-1, 4}));
  }
  auto a = torch::cat(anchors, 0).unsqueeze(0);
  auto valid = ((a > 0.01) & (a < 0.99)).all(-1, true);
  auto logit = torch::log(a / (1.0 - a));
  logit = torch::where(valid, logit, torch::full_like(logit, std::numeric_limits<float>::max()));
  return {logit, valid};
}

torch::Tensor build_denoising_attention_mask(const DenoisingQueries& dn, int64_t num_queries) {
  const auto k = dn.size();
  const auto total = k + num_queries;
  const auto b = dn.valid.size(0);
  const auto neg_inf = -std::numeric_limits<float>::infinity();
  auto blocked = torch::zeros({total, total}, torch::kBool);
  if (k > 0) {
    blocked.narrow(0, k, num_queries).narrow(1, 0, k).fill_(true);
    for (int64_t g = 0; g < dn.groups; ++g) {
      auto rows = blocked.narrow(0, g * dn.group_size, dn.group_size).narrow(1, 0, k);
      rows.fill_(true);
      rows.narrow(1, g * dn.group_size, dn.group_size).fill_(false);
    }
  }
  auto mask = blocked.unsqueeze(0).repeat({b, 1, 1});
  if (k > 0) {
    // Padding slots are hidden as keys but may attend to themselves so every row stays finite.
    auto pad_cols = (~dn.valid).unsqueeze(1).expand({b, total, k});
    mask.narrow(2, 0, k).logical_or_(pad_cols);
    auto diag = torch::eye(total, torch::kBool).unsqueeze(0);
    mask = mask & ~diag;
  }
  return torch::zeros({b, 1, total, total}).masked_fill(mask.unsqueeze(1), neg_inf);
}

MsDeformableAttentionImpl::MsDeformableAttentionImpl(int64_t dim, int64_t heads, int64_t levels, int64_t points)
    : dim_(dim), heads_(heads), levels_(levels), points_(points) {
  sampling_offsets = register_module("sampling_offsets", torch::nn::Linear(dim, heads * levels * points * 2));
  attention_weights = register_module("attention_weights", torch::nn::Linear(dim, heads * levels * points));
  value_proj = register_module("value_proj", torch::nn::Linear(dim, dim));
  output_proj = register_module("output_proj", torch::nn::Linear(dim, dim));
  reset_parameters();
}

void MsDeformableAttentionImpl::reset_parameters() {
  torch::NoGradGuard guard;
  sampling_offsets->weight.zero_();
  // Initial offsets fan out in one direction per head, growing with the point index.
  auto thetas = torch::arange(heads_, torch::kFloat32) * (2.0 * std::numbers::pi / static_cast<double>(heads_));
  auto grid = torch::stack({thetas.cos(), thetas.sin()}, -1);
  grid = grid / std::get<0>(grid.abs().max(-1, true));
  grid = grid.view({heads_, 1, 1, 2}).repeat({1, levels_, points_, 1});
  auto scale = torch::arange(1, points_ + 1, torch::kFloat32).view({1, 1, points_, 1});
  sampling_offsets->bias.copy_((grid * scale).flatten());
  attention_weights->weight.zero_();
  attention_weights->bias.zero_();
  torch::nn::init::xavier_uniform_(value_proj->weight);
  value_proj->bias.zero_();
  torch::nn::init::xavier_uniform_(output_proj->weight);
  output_proj->bias.zero_();
}

torch::Tensor MsDeformableAttentionImpl::forward(const torch::Tensor& query, const torch::Tensor& reference_boxes,
                                                 const TokenSequence& memory) {
  const auto b = query.size(0), q = query.size(1);
  const auto hd = dim_ / heads_;
  if (static_cast<int64_t>(memory.shapes.size()) != levels_) throw ShapeError("level count mismatch");
  auto value = value_proj(memory.tokens).view({b, memory.total(), heads_, hd});
  auto offsets = sampling_offsets(query).view({b, q, heads_, levels_, points_, 2});
  auto weights = torch::softmax(attention_weights(query).view({b, q, heads_, levels_ * points_}), -1)
                     .view({b, q, heads_, levels_, points_});
  auto ref = reference_boxes.view({b, q, 1, 1, 1, 4});
  auto centers = ref.narrow(-1, 0, 2);
  auto extents = ref.narrow(-1, 2, 2);
  auto locations = centers + offsets / static_cast<double>(points_) * extents * 0.5;
  auto grids = 2.0 * locations - 1.0;  // grid_sample coordinates

  std::vector<torch::Tensor> sampled;
  for (int64_t l = 0; l < levels_; ++l) {
    const auto [h, w] = memory.shapes[l];
    auto v = value.narrow(1, memory.level_start[l], h * w)  // [B, HW, heads, hd]
                 .permute({0, 2, 3, 1})
                 .reshape({b * heads_, hd, h, w});
    auto g = grids.select(3, l)  // [B, Q, heads, points, 2]
                 .permute({0, 2, 1, 3, 4})
                 .reshape({b * heads_, q, points_, 2});
    sampled.push_back(F::grid_sample(v, g,
                                     F::GridSampleFuncOptions()
                                         .mode(torch::kBilinear)
                                         .padding_mode(torch::kZeros)
                                         .align_corners(false)));  // [B*heads, hd, Q, points]
  }
  auto stacked = torch::cat(sampled, -1);  // [B*heads, hd, Q, levels*points]
  auto w = weights.permute({0, 2, 1, 3, 4}).reshape({b * heads_, 1, q, levels_ * points_});
  auto out = (stacked * w).sum(-1).view({b, heads_ * hd, q}).transpose(1, 2);
  return output_proj(out);
}

DecoderLayerImpl::DecoderLayerImpl(int64_t dim, int64_t heads, int64_t levels, int64_t points, int64_t ffn_dim) {
  self_attn = register_module("self_attn", MultiHeadAttention(dim, heads));
  norm1 = register_module("norm1", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
  cross_attn = register_module("cross_attn", MsDeformableAttention(dim, heads, levels, points));
  norm2 = register_module("norm2", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
  ffn1 = register_module("ffn1", torch::nn::Linear(dim, ffn_dim));
  ffn2 = register_module("ffn2", torch::nn::Linear(ffn_dim, dim));
  norm3 = register_module("norm3", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
}

torch::Tensor DecoderLayerImpl::forward(const torch::Tensor& target, const torch::Tensor& reference_boxes,
                                        const TokenSequence& memory, const torch::Tensor& attn_mask,
                                        const torch::Tensor& query_pos) {
  auto qk = target + query_pos;
  auto x = norm1(target + self_attn(qk, qk, target, attn_mask));
  x = norm2(x + cross_attn(x + query_pos, reference_boxes, memory));
  return norm3(x + ffn2(torch::relu(ffn1(x))));
}

DetDecoderImpl::DetDecoderImpl(const DetDecoderConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const auto d = cfg_.hidden_dim;
  enc_output = register_module("enc_output", torch::nn::Linear(d, d));
  enc_norm = register_module("enc_norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({d})));
  enc_score_head = register_module("enc_score_head", torch::nn::Linear(d, cfg_.num_classes));
  enc_bbox_head = register_module("enc_bbox_head", Mlp(d, d, 4, 3));
  query_pos_head = register_module("query_pos_head", Mlp(4, 2 * d, d, 2));
  level_embed = register_module("level_embed", torch::nn::Embedding(3, d));
  denoising_class_embed = register_module("denoising_class_embed", torch::nn::Embedding(cfg_.num_classes + 1, d));
  layers = register_module("layers", torch::nn::ModuleList());
  score_heads = register_module("score_heads", torch::nn::ModuleList());
  bbox_heads = register_module("bbox_heads", torch::nn::ModuleList());

  // Classification bias starts at prior probability 0.01.
  const double prior_bias = -std::log((1.0 - 0.01) / 0.01);
  torch::NoGradGuard guard;
  enc_score_head->bias.fill_(prior_bias);
  for (int64_t i = 0; i < cfg_.num_layers; ++i) {
    layers->push_back(DecoderLayer(d, cfg_.heads, 3, cfg_.points_per_level, cfg_.ffn_dim));
    torch::nn::Linear score(d, cfg_.num_classes);
    score->bias.fill_(prior_bias);
    score_heads->push_back(score);
    Mlp box(d, d, 4, 3);
    // Zero-initialized last layer: the first refinement returns the reference box.
    auto last = box->linears[2]->as<torch::nn::Linear>();
    last->weight.zero_();
    last->bias.zero_();
    bbox_heads->push_back(box);
  }
  auto enc_last = enc_bbox_head->linears[2]->as<torch::nn::Linear>();
  enc_last->weight.zero_();
  enc_last->bias.zero_();
}

DecoderOutput DetDecoderImpl::forward(const FeaturePyramid& pyramid, const DenoisingQueries* denoising) {
  auto seq = flatten_concat(pyramid);
  if (seq.tokens.size(2) != cfg_.hidden_dim) throw ShapeError("decoder hidden_dim does not match pyramid width");
  const auto b = seq.tokens.size(0);
  {
    std::vector<torch::Tensor> with_level;
    for (int64_t l = 0; l < 3; ++l) {
      const auto [h, w] = seq.shapes[l];
      with_level.push_back(seq.tokens.narrow(1, seq.level_start[l], h * w) + level_embed->weight[l]);
    }
    seq.tokens = torch::cat(with_level, 1);
  }

  auto [anchors, valid] = generate_anchors(seq.shapes);
  anchors = anchors.to(seq.tokens.dtype());
  auto memory = seq.tokens * valid.to(seq.tokens.dtype());
  auto enc_memory = enc_norm(enc_output(memory));
  auto enc_logits = enc_score_head(enc_memory);                       // [B, T, C]
  auto enc_coord_unact = enc_bbox_head(enc_memory) + anchors;         // [B, T, 4]
  // Invalid anchors never win selection.
  auto select_scores = std::get<0>(enc_logits.max(-1)).masked_fill(~valid.squeeze(-1), -1e9);

  DecoderOutput out;
  out.selection = select_top_queries(select_scores.detach(), cfg_.num_queries);
  auto idx = out.selection.indices;
  auto gather = [&](const torch::Tensor& t) {
    return t.gather(1, idx.unsqueeze(-1).expand({b, cfg_.num_queries, t.size(2)}));
  };
  auto ref_unact = gather(enc_coord_unact);
  out.encoder.boxes = torch::sigmoid(ref_unact);
  out.encoder.logits = gather(enc_logits);
  auto target = gather(enc_memory).detach();
  ref_unact = ref_unact.detach();

  int64_t num_dn = 0;
  torch::Tensor attn_mask;
  if (denoising != nullptr && denoising->size() > 0) {
    num_dn = denoising->size();
    auto dn_target = denoising_class_embed(denoising->labels);
    auto dn_ref = inverse_sigmoid(denoising->boxes.to(seq.tokens.dtype()));
    target = torch::cat({dn_target, target}, 1);
    ref_unact = torch::cat({dn_ref, ref_unact}, 1);
    attn_mask = build_denoising_attention_mask(*denoising, cfg_.num_queries).to(seq.tokens.dtype());
  }

  auto ref = torch::sigmoid(ref_unact);
  auto x = target;
  DetectionSet all;
  for (int64_t i = 0; i < cfg_.num_layers; ++i) {
    auto pos = query_pos_head(ref);
    x = layers[i]->as<DecoderLayer>()->forward(x, ref, seq, attn_mask, pos);
    auto boxes = torch::sigmoid(bbox_heads[i]->as<Mlp>()->forward(x) + inverse_sigmoid(ref));
    auto logits = score_heads[i]->as<torch::nn::Linear>()->forward(x);
    all.per_layer.push_back({logits, boxes});
    ref = boxes.detach();
  }

  if (num_dn > 0) {
    DetectionSet dn;
    for (auto& p : all.per_layer) {
      dn.per_layer.push_back({p.logits.narrow(1, 0, num_dn), p.boxes.narrow(1, 0, num_dn)});
      out.main.per_layer.push_back(
          {p.logits.narrow(1, num_dn, cfg_.num_queries), p.boxes.narrow(1, num_dn, cfg_.num_queries)});
    }
    out.denoising = std::move(dn);
  } else {
    out.main = std::move(all);
  }
  return out;
}

}  // namespace rmtppad
