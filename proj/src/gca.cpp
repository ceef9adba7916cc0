#include "rmtppad/gca.hpp"

#include <string>

#include "rmtppad/errors.hpp"

namespace rmtppad {

namespace F = torch::nn::functional;

void GcaConfig::validate() const {
  if (channels <= 0 || reduction_ratio <= 0 || channels % reduction_ratio != 0)
    throw ConfigError("GCA channels (" + std::to_string(channels) + ") must be divisible by R (" +
                      std::to_string(reduction_ratio) + ")");
  if (!(0.0 < gate_clip.first && gate_clip.first < gate_clip.second && gate_clip.second < 1.0))
    throw ConfigError("gate clip bounds must satisfy 0 < lo < hi < 1");
}

namespace {

void check_channels(const torch::Tensor& x, int64_t channels, const char* what) {
  if (x.dim() != 4 || x.size(1) != channels)
    throw ConfigError(std::string(what) + ": expected " + std::to_string(channels) + " channels");
}

torch::nn::Conv2d conv1x1(int64_t in, int64_t out) {
  return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 1));
}

}  // namespace

AdapterImpl::AdapterImpl(const GcaConfig& cfg) : channels_(cfg.channels) {
  cfg.validate();
  const auto r = cfg.reduced();
  reduce = register_module("reduce", ConvBnAct(cfg.channels, r, 1));
  depthwise = register_module(
      "depthwise", torch::nn::Conv2d(torch::nn::Conv2dOptions(r, r, 3).padding(1).groups(r).bias(false)));
  pointwise = register_module("pointwise", ConvBnAct(r, cfg.channels, 1));
}

torch::Tensor AdapterImpl::forward(const torch::Tensor& shared) {
  check_channels(shared, channels_, "adapter input");
  return pointwise(depthwise(reduce(shared)));
}

torch::Tensor combine_gate(const torch::Tensor& fusion, const torch::Tensor& channel,
                           const torch::Tensor& spatial, double lo, double hi) {
  return torch::clamp(fusion * channel + (1.0 - fusion) * spatial, lo, hi);
}

GateImpl::GateImpl(const GcaConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const auto c = cfg_.channels;
  const auto r = cfg_.reduced();
  ca_fc1 = register_module("ca_fc1", conv1x1(2 * c, r));
  ca_fc2 = register_module("ca_fc2", conv1x1(r, c));
  sa_conv = register_module("sa_conv", torch::nn::Conv2d(torch::nn::Conv2dOptions(2, 1, 7).padding(3)));
  fg_fc1 = register_module("fg_fc1", conv1x1(2 * c, r));
  fg_fc2 = register_module("fg_fc2", conv1x1(r, c));
}

GateComponents GateImpl::components(const torch::Tensor& shared, const torch::Tensor& task) {
  if (shared.sizes() != task.sizes()) throw InputError("gate inputs must have equal shapes");
  check_channels(shared, cfg_.channels, "gate input");
  auto both = torch::cat({shared, task}, 1);
  auto pooled = both.mean({2, 3}, /*keepdim=*/true);
  GateComponents g;
  g.channel = torch::sigmoid(ca_fc2(torch::relu(ca_fc1(pooled))));
  auto stats = torch::cat({both.mean(1, true), std::get<0>(both.max(1, true))}, 1);
  g.spatial = torch::sigmoid(sa_conv(stats));
  g.fusion = torch::sigmoid(fg_fc2(torch::relu(fg_fc1(pooled))));
  return g;
}

torch::Tensor GateImpl::forward(const torch::Tensor& shared, const torch::Tensor& task) {
  auto g = components(shared, task);
  return combine_gate(g.fusion, g.channel, g.spatial, cfg_.gate_clip.first, cfg_.gate_clip.second)
      .expand_as(shared);
}

GcaImpl::GcaImpl(const GcaConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  adapter = register_module("adapter", Adapter(cfg_));
  gate = register_module("gate", Gate(cfg_));
}

torch::Tensor GcaImpl::adapter_forward(const torch::Tensor& shared) { return adapter(shared); }

torch::Tensor GcaImpl::compute_gate(const torch::Tensor& shared, const torch::Tensor& task) {
  return gate(shared, task);
}

torch::Tensor GcaImpl::fuse_with_task(const torch::Tensor& shared, const torch::Tensor& task) {
  auto g = compute_gate(shared, task);
  return shared + g * (task - shared);
}

torch::Tensor GcaImpl::forward(const torch::Tensor& shared) {
  return fuse_with_task(shared, adapter_forward(shared));
}

}  // namespace rmtppad
