#pragma once

#include <torch/torch.h>

#include <utility>

#include "rmtppad/layers.hpp"

namespace rmtppad {

struct GcaConfig {
  int64_t channels = 256;
  int64_t reduction_ratio = 16;
  std::pair<double, double> gate_clip{0.05, 0.95};

  void validate() const;
  int64_t reduced() const { return channels / reduction_ratio; }
};

/// Task adapter: 1x1 conv (C -> C/R) + BN + SiLU, then a depthwise separable
/// conv (3x3 depthwise on C/R, pointwise C/R -> C) + BN + SiLU.
class AdapterImpl : public torch::nn::Module {
 public:
  explicit AdapterImpl(const GcaConfig& cfg);
  torch::Tensor forward(const torch::Tensor& shared);

  ConvBnAct reduce{nullptr};
  torch::nn::Conv2d depthwise{nullptr};
  ConvBnAct pointwise{nullptr};

 private:
  int64_t channels_;
};
TORCH_MODULE(Adapter);

/// Raw gate sub-network outputs, before combination.
struct GateComponents {
  torch::Tensor channel;  // [B, C, 1, 1]   C_gate
  torch::Tensor spatial;  // [B, 1, H, W]   S_gate
  torch::Tensor fusion;   // [B, C, 1, 1]   FG_gate
};

/// gate = clamp(fg * ca + (1 - fg) * sa, lo, hi), broadcast to [B, C, H, W].
torch::Tensor combine_gate(const torch::Tensor& fusion, const torch::Tensor& channel,
                           const torch::Tensor& spatial, double lo, double hi);

/// Gate network over concat(shared, task):
///  - CA: squeeze-and-excitation (GAP -> 2C -> C/R -> C -> sigmoid)
///  - SA: 7x7 conv over [channel-mean, channel-max] -> sigmoid
///  - FGM: GAP -> 2C -> C/R -> C -> sigmoid, a per-channel fusion map
class GateImpl : public torch::nn::Module {
 public:
  explicit GateImpl(const GcaConfig& cfg);

  GateComponents components(const torch::Tensor& shared, const torch::Tensor& task);
  torch::Tensor forward(const torch::Tensor& shared, const torch::Tensor& task);

  torch::nn::Conv2d ca_fc1{nullptr}, ca_fc2{nullptr};
  torch::nn::Conv2d sa_conv{nullptr};
  torch::nn::Conv2d fg_fc1{nullptr}, fg_fc2{nullptr};

 private:
  GcaConfig cfg_;
};
TORCH_MODULE(Gate);

/// Gate Control with Adapter for one scale of one branch.
class GcaImpl : public torch::nn::Module {
 public:
  explicit GcaImpl(const GcaConfig& cfg);

  torch::Tensor adapter_forward(const torch::Tensor& shared);
  torch::Tensor compute_gate(const torch::Tensor& shared, const torch::Tensor& task);

  /// out = shared + gate * (task - shared), with the gate computed from (shared, task).
  torch::Tensor fuse_with_task(const torch::Tensor& shared, const torch::Tensor& task);

  /// Full module: task = adapter(shared), then fuse_with_task.
  torch::Tensor forward(const torch::Tensor& shared);

  const GcaConfig& config() const { return cfg_; }

  Adapter adapter{nullptr};
  Gate gate{nullptr};

 private:
  GcaConfig cfg_;
};
TORCH_MODULE(Gca);

}  // namespace rmtppad
