#pragma once

#include <torch/torch.h>

#include <array>
#include <string>
#include <vector>

#include <opencv2/core.hpp>

#include "rmtppad/grad_analysis.hpp"
#include "rmtppad/lane_eval.hpp"

namespace rmtppad {

/// 8-bit RGB image; throws InputError if the file cannot be decoded.
cv::Mat read_rgb(const std::string& path);
void write_rgb(const std::string& path, const cv::Mat& rgb);

/// Any nonzero pixel is foreground. Throws InputError if unreadable.
BinaryMask read_mask(const std::string& path);
/// Writes 0/255 single-channel PNG.
void write_mask(const std::string& path, const BinaryMask& mask);

BinaryMask resize_mask_nearest(const BinaryMask& mask, int64_t height, int64_t width);

/// HWC uint8 RGB <-> CHW uint8 tensor.
torch::Tensor rgb_to_tensor(const cv::Mat& rgb);
cv::Mat tensor_to_rgb(const torch::Tensor& chw);

torch::Tensor mask_to_tensor(const BinaryMask& mask);  // [H, W] uint8
BinaryMask tensor_to_mask(const torch::Tensor& hw);     // nonzero -> 1

/// Drivable area tinted green, lanes red, boxes (normalized cxcywh) drawn in blue.
cv::Mat compose_overlay(const cv::Mat& rgb, const BinaryMask& drivable, const BinaryMask& lane,
                        const std::vector<std::array<double, 4>>& boxes);

/// Bar chart of a similarity histogram, written as PNG.
void write_histogram_plot(const std::string& path, const SimilarityHistogram& hist, const std::string& title);

}  // namespace rmtppad
