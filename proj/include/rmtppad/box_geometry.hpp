#pragma once

#include <array>

namespace rmtppad {

using BoxXyxy = std::array<double, 4>;

/// Generalized IoU of two xyxy boxes: IoU - |C \ (A u B)| / |C|, C the enclosing box.
/// Zero-area boxes are points (IoU 0); if C also has zero area the result is 0.
double giou(const BoxXyxy& a, const BoxXyxy& b);
double iou(const BoxXyxy& a, const BoxXyxy& b);

}  // namespace rmtppad
