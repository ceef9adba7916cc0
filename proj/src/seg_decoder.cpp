#include "rmtppad/seg_decoder.hpp"

#include <algorithm>
#include <string>

#include "rmtppad/errors.hpp"

namespace rmtppad {

namespace F = torch::nn::functional;

void SegThresholds::validate() const {
  auto ok = [](double t) { return t > 0.0 && t < 1.0; };
  if (!ok(drivable) || !ok(lane)) throw ConfigError("segmentation thresholds must lie in (0, 1)");
}

ScaleWeightsImpl::ScaleWeightsImpl() {
  logits = register_parameter("logits", torch::zeros({kSegTasks, kSegScales}));
}

namespace {

void append_upsample_stage(torch::nn::Sequential& seq, int64_t in, int64_t out) {
  seq->push_back(
      torch::nn::ConvTranspose2d(torch::nn::ConvTranspose2dOptions(in, out, 4).stride(2).padding(1).bias(false)));
  seq->push_back(torch::nn::BatchNorm2d(out));
  seq->push_back(torch::nn::SiLU());
}

}  // namespace

SegDecoderImpl::SegDecoderImpl(const SegDecoderConfig& cfg) : cfg_(cfg) {
  if (cfg_.in_channels <= 0 || cfg_.proj_channels <= 0) throw ConfigError("decoder widths must be positive");
  scale_weights = register_module("scale_weights", ScaleWeights());
  proj = register_module("proj", torch::nn::ModuleList());
  for (int64_t k = 0; k < kSegScales; ++k)
    proj->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(cfg_.in_channels, cfg_.proj_channels, 1)));

  // Channel width halves over the first two stages, floor of 8.
  const auto c0 = cfg_.proj_channels;
  const auto c1 = std::max<int64_t>(c0 / 2, 8);
  const auto c2 = std::max<int64_t>(c0 / 4, 8);
  torch::nn::Sequential seq;
  append_upsample_stage(seq, c0, c1);
  append_upsample_stage(seq, c1, c2);
  append_upsample_stage(seq, c2, c2);
  trunk = register_module("trunk", seq);
  heads = register_module("heads", torch::nn::ModuleList());
  for (int64_t t = 0; t < kSegTasks; ++t) {
    heads->push_back(torch::nn::Sequential(ConvBnAct(c2, c2, 3),
                                           torch::nn::Conv2d(torch::nn::Conv2dOptions(c2, 1, 1))));
  }
}

torch::Tensor SegDecoderImpl::project_align_stack(const FeaturePyramid& pyramid) {
  pyramid.check();
  if (pyramid.s3.size(1) != cfg_.in_channels) throw ShapeError("segmentation decoder channel mismatch");
  const auto h = pyramid.s3.size(2), w = pyramid.s3.size(3);
  auto p3 = proj[0]->as<torch::nn::Conv2d>()->forward(pyramid.s3);
  auto p4 = resize_bilinear(proj[1]->as<torch::nn::Conv2d>()->forward(pyramid.s4), h, w);
  auto p5 = resize_bilinear(proj[2]->as<torch::nn::Conv2d>()->forward(pyramid.s5), h, w);
  return torch::stack({p3, p4, p5}, 1);
}

torch::Tensor SegDecoderImpl::fuse_scales(const torch::Tensor& stacked, int64_t task) {
  if (task < 0 || task >= kSegTasks) throw InputError("unknown segmentation task id " + std::to_string(task));
  if (stacked.dim() != 5 || stacked.size(1) != kSegScales) throw ShapeError("stacked features must be [B,3,C,H,W]");
  auto w = scale_weights->weights()[task].to(stacked.dtype()).view({1, kSegScales, 1, 1, 1});
  return (stacked * w).sum(1);
}

torch::Tensor SegDecoderImpl::run_trunk(const torch::Tensor& fused) { return trunk->forward(fused); }

torch::Tensor SegDecoderImpl::run_head(const torch::Tensor& up, int64_t task) {
  return heads[task]->as<torch::nn::Sequential>()->forward(up);
}

torch::Tensor SegDecoderImpl::upsample_refine(const torch::Tensor& fused, int64_t task) {
  if (task < 0 || task >= kSegTasks) throw InputError("unknown segmentation task id " + std::to_string(task));
  return run_head(run_trunk(fused), task);
}

SegLogits SegDecoderImpl::forward(const FeaturePyramid& pyramid) {
  auto stacked = project_align_stack(pyramid);
  const auto b = stacked.size(0);
  // Both tasks go through the shared trunk in one batched call.
  auto fused = torch::cat({fuse_scales(stacked, 0), fuse_scales(stacked, 1)}, 0);
  auto up = run_trunk(fused);
  return {run_head(up.narrow(0, 0, b), 0), run_head(up.narrow(0, b, b), 1)};
}

SegMasks predict_masks(const SegLogits& logits, const SegThresholds& thresholds) {
  thresholds.validate();
  SegMasks m;
  m.thresholds = thresholds;
  m.drivable_prob = torch::sigmoid(logits.drivable).squeeze(1);
  m.lane_prob = torch::sigmoid(logits.lane).squeeze(1);
  m.drivable_mask = m.drivable_prob >= thresholds.drivable;
  m.lane_mask = m.lane_prob >= thresholds.lane;
  return m;
}

}  // namespace rmtppad
