#include "rmtppad/box_geometry.hpp"

#include <algorithm>

namespace rmtppad {

namespace {

double area(const BoxXyxy& b) { return std::max(0.0, b[2] - b[0]) * std::max(0.0, b[3] - b[1]); }

double intersection(const BoxXyxy& a, const BoxXyxy& b) {
  const double w = std::min(a[2], b[2]) - std::max(a[0], b[0]);
  const double h = std::min(a[3], b[3]) - std::max(a[1], b[1]);
  return std::max(0.0, w) * std::max(0.0, h);
}

}  // namespace

double iou(const BoxXyxy& a, const BoxXyxy& b) {
  const double inter = intersection(a, b);
  const double uni = area(a) + area(b) - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

double giou(const BoxXyxy& a, const BoxXyxy& b) {
  const double inter = intersection(a, b);
  const double uni = area(a) + area(b) - inter;
  const double i = uni > 0.0 ? inter / uni : 0.0;
  const BoxXyxy c{std::min(a[0], b[0]), std::min(a[1], b[1]), std::max(a[2], b[2]), std::max(a[3], b[3])};
  const double hull = area(c);
  if (hull <= 0.0) return 0.0;
  return i - (hull - uni) / hull;
}


}  // namespace rmtppad
