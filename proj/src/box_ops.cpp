#include "rmtppad/box_ops.hpp"

#include <algorithm>

namespace rmtppad {

namespace {
constexpr double kEps = 1e-7;
}  // namespace

torch::Tensor cxcywh_to_xyxy(const torch::Tensor& boxes) {
  auto c = boxes.unbind(-1);
  return torch::stack({c[0] - 0.5 * c[2], c[1] - 0.5 * c[3], c[0] + 0.5 * c[2], c[1] + 0.5 * c[3]}, -1);
}

torch::Tensor xyxy_to_cxcywh(const torch::Tensor& boxes) {
  auto c = boxes.unbind(-1);
  return torch::stack({(c[0] + c[2]) * 0.5, (c[1] + c[3]) * 0.5, c[2] - c[0], c[3] - c[1]}, -1);
}

namespace {

struct PairTerms {
  torch::Tensor inter, uni, hull;
};

PairTerms pair_terms(const torch::Tensor& a, const torch::Tensor& b) {
  auto area_a = (a.select(-1, 2) - a.select(-1, 0)).clamp_min(0) * (a.select(-1, 3) - a.select(-1, 1)).clamp_min(0);
  auto area_b = (b.select(-1, 2) - b.select(-1, 0)).clamp_min(0) * (b.select(-1, 3) - b.select(-1, 1)).clamp_min(0);
  auto lt = torch::max(a.narrow(-1, 0, 2), b.narrow(-1, 0, 2));
  auto rb = torch::min(a.narrow(-1, 2, 2), b.narrow(-1, 2, 2));
  auto wh = (rb - lt).clamp_min(0);
  auto inter = wh.select(-1, 0) * wh.select(-1, 1);
  auto uni = area_a + area_b - inter;
  auto clt = torch::min(a.narrow(-1, 0, 2), b.narrow(-1, 0, 2));
  auto crb = torch::max(a.narrow(-1, 2, 2), b.narrow(-1, 2, 2));
  auto cwh = (crb - clt).clamp_min(0);
  return {inter, uni, cwh.select(-1, 0) * cwh.select(-1, 1)};
}

}  // namespace

torch::Tensor paired_iou(const torch::Tensor& a, const torch::Tensor& b) {
  auto t = pair_terms(a, b);
  return t.inter / (t.uni + kEps);
}

torch::Tensor paired_giou(const torch::Tensor& a, const torch::Tensor& b) {
  auto t = pair_terms(a, b);
  auto i = t.inter / (t.uni + kEps);
  return i - (t.hull - t.uni) / (t.hull + kEps);
}

torch::Tensor pairwise_giou(const torch::Tensor& a, const torch::Tensor& b) {
  const auto m = a.size(0), n = b.size(0);
  return paired_giou(a.unsqueeze(1).expand({m, n, 4}), b.unsqueeze(0).expand({m, n, 4}));
}

}  // namespace rmtppad
