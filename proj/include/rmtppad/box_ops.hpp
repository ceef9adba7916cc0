#pragma once

#include <torch/torch.h>

#include "rmtppad/box_geometry.hpp"

namespace rmtppad {

torch::Tensor cxcywh_to_xyxy(const torch::Tensor& boxes);
torch::Tensor xyxy_to_cxcywh(const torch::Tensor& boxes);

/// Elementwise IoU / GIoU of paired xyxy boxes [..., 4] -> [...].
torch::Tensor paired_iou(const torch::Tensor& a, const torch::Tensor& b);
torch::Tensor paired_giou(const torch::Tensor& a, const torch::Tensor& b);

/// All-pairs GIoU of xyxy boxes: [M, 4] x [N, 4] -> [M, N].
torch::Tensor pairwise_giou(const torch::Tensor& a, const torch::Tensor& b);

}  // namespace rmtppad
