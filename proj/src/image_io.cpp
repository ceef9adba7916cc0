#include "rmtppad/image_io.hpp"

#include <algorithm>
#include <cstring>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "rmtppad/errors.hpp"

namespace rmtppad {

cv::Mat read_rgb(const std::string& path) {
  cv::Mat bgr = cv::imread(path, cv::IMREAD_COLOR);
  if (bgr.empty()) throw InputError("cannot read image " + path);
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  return rgb;
}

void write_rgb(const std::string& path, const cv::Mat& rgb) {
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  if (!cv::imwrite(path, bgr)) throw InputError("cannot write image " + path);
}

BinaryMask read_mask(const std::string& path) {
  cv::Mat m = cv::imread(path, cv::IMREAD_GRAYSCALE);
  if (m.empty()) throw InputError("cannot read mask " + path);
  if (!m.isContinuous()) m = m.clone();
  return BinaryMask(m.rows, m.cols, std::span<const uint8_t>(m.data, m.total()));
}

void write_mask(const std::string& path, const BinaryMask& mask) {
  cv::Mat m(static_cast<int>(mask.height()), static_cast<int>(mask.width()), CV_8UC1);
  std::transform(mask.data().begin(), mask.data().end(), m.data, [](uint8_t v) { return v ? 255 : 0; });
  if (!cv::imwrite(path, m)) throw InputError("cannot write mask " + path);
}

BinaryMask resize_mask_nearest(const BinaryMask& mask, int64_t height, int64_t width) {
  if (mask.height() == height && mask.width() == width) return mask;
  cv::Mat src(static_cast<int>(mask.height()), static_cast<int>(mask.width()), CV_8UC1,
              const_cast<uint8_t*>(mask.data().data()));
  cv::Mat dst;
  cv::resize(src, dst, cv::Size(static_cast<int>(width), static_cast<int>(height)), 0, 0, cv::INTER_NEAREST);
  return BinaryMask(height, width, std::span<const uint8_t>(dst.data, dst.total()));
}

torch::Tensor rgb_to_tensor(const cv::Mat& rgb) {
  if (rgb.type() != CV_8UC3) throw InputError("expected 8-bit 3-channel image");
  cv::Mat c = rgb.isContinuous() ? rgb : rgb.clone();
  return torch::from_blob(c.data, {c.rows, c.cols, 3}, torch::kUInt8).permute({2, 0, 1}).contiguous();
}

cv::Mat tensor_to_rgb(const torch::Tensor& chw) {
  auto t = chw.to(torch::kUInt8).permute({1, 2, 0}).contiguous();
  cv::Mat out(static_cast<int>(t.size(0)), static_cast<int>(t.size(1)), CV_8UC3);
  std::memcpy(out.data, t.data_ptr<uint8_t>(), t.numel());
  return out;
}

torch::Tensor mask_to_tensor(const BinaryMask& mask) {
  return torch::from_blob(const_cast<uint8_t*>(mask.data().data()), {mask.height(), mask.width()}, torch::kUInt8)
      .clone();
}

BinaryMask tensor_to_mask(const torch::Tensor& hw) {
  if (hw.dim() != 2) throw ShapeError("mask tensor must be [H, W]");
  auto t = hw.ne(0).to(torch::kUInt8).contiguous();
  return BinaryMask(t.size(0), t.size(1), std::span<const uint8_t>(t.data_ptr<uint8_t>(), t.numel()));
}

cv::Mat compose_overlay(const cv::Mat& rgb, const BinaryMask& drivable, const BinaryMask& lane,
                        const std::vector<std::array<double, 4>>& boxes) {
  if (drivable.height() != rgb.rows || drivable.width() != rgb.cols || lane.height() != rgb.rows ||
      lane.width() != rgb.cols)
    throw ShapeError("overlay masks must match the image size");
  cv::Mat out = rgb.clone();
  for (int y = 0; y < out.rows; ++y) {
    for (int x = 0; x < out.cols; ++x) {
      auto& px = out.at<cv::Vec3b>(y, x);
      if (lane.at(y, x)) {
        px = cv::Vec3b(255, 0, 0);
      } else if (drivable.at(y, x)) {
        px = cv::Vec3b(static_cast<uint8_t>(px[0] / 2), static_cast<uint8_t>(px[1] / 2 + 127),
                       static_cast<uint8_t>(px[2] / 2));
      }
    }
  }
  for (const auto& b : boxes) {
    const cv::Point p0(static_cast<int>((b[0] - b[2] / 2) * out.cols), static_cast<int>((b[1] - b[3] / 2) * out.rows));
    const cv::Point p1(static_cast<int>((b[0] + b[2] / 2) * out.cols), static_cast<int>((b[1] + b[3] / 2) * out.rows));
    cv::rectangle(out, p0, p1, cv::Scalar(0, 0, 255), 2);
  }
  return out;
}

void write_histogram_plot(const std::string& path, const SimilarityHistogram& hist, const std::string& title) {
  constexpr int kW = 640, kH = 360, kMargin = 40;
  cv::Mat img(kH, kW, CV_8UC3, cv::Scalar(255, 255, 255));
  const auto bins = static_cast<int>(hist.counts.size());
  const int64_t peak = bins ? *std::max_element(hist.counts.begin(), hist.counts.end()) : 0;
  const double bar_w = static_cast<double>(kW - 2 * kMargin) / std::max(bins, 1);
  for (int i = 0; i < bins; ++i) {
    const double frac = peak ? static_cast<double>(hist.counts[i]) / peak : 0.0;
    const int top = kH - kMargin - static_cast<int>(frac * (kH - 2 * kMargin));
    const int x0 = kMargin + static_cast<int>(i * bar_w);
    const int x1 = kMargin + static_cast<int>((i + 1) * bar_w) - 1;
    const bool negative = hist.bin_edges[i + 1] <= 0.0;
    cv::rectangle(img, cv::Point(x0, top), cv::Point(std::max(x0, x1), kH - kMargin),
                  negative ? cv::Scalar(200, 60, 60) : cv::Scalar(60, 60, 200), cv::FILLED);
  }
  cv::line(img, cv::Point(kW / 2, kMargin / 2), cv::Point(kW / 2, kH - kMargin), cv::Scalar(0, 0, 0), 1);
  cv::line(img, cv::Point(kMargin, kH - kMargin), cv::Point(kW - kMargin, kH - kMargin), cv::Scalar(0, 0, 0), 1);
  cv::putText(img, "-1", cv::Point(kMargin - 10, kH - 15), cv::FONT_HERSHEY_SIMPLEX, 0.5, cv::Scalar(0, 0, 0));
  cv::putText(img, "0", cv::Point(kW / 2 - 4, kH - 15), cv::FONT_HERSHEY_SIMPLEX, 0.5, cv::Scalar(0, 0, 0));
  cv::putText(img, "1", cv::Point(kW - kMargin - 4, kH - 15), cv::FONT_HERSHEY_SIMPLEX, 0.5, cv::Scalar(0, 0, 0));
  cv::putText(img, title, cv::Point(kMargin, 25), cv::FONT_HERSHEY_SIMPLEX, 0.6, cv::Scalar(0, 0, 0));
  write_rgb(path, img);
}

}  // namespace rmtppad
