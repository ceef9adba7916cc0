#pragma once

#include <torch/torch.h>

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "rmtppad/config.hpp"
#include "rmtppad/lane_eval.hpp"
#include "rmtppad/losses.hpp"

namespace rmtppad {

/// One training/evaluation example at model input resolution.
struct Sample {
  std::string id;
  torch::Tensor image;  // [3, H, W] uint8 RGB
  std::vector<int64_t> labels;
  std::vector<std::array<double, 4>> boxes;  // normalized cxcywh
  BinaryMask drivable;
  BinaryMask lane;      // dilated (8 px) label used for training and scoring
  BinaryMask lane_raw;  // thin label as annotated

  int64_t height() const { return image.size(1); }
  int64_t width() const { return image.size(2); }

  /// Throws InputError if masks disagree with the image size or a box is invalid.
  void check() const;
};

/// Road scenes: trapezoid drivable region, 2 px lane lines, rectangular
/// vehicles. Same (n, size, seed) gives byte-identical samples.
std::vector<Sample> generate_synthetic_dataset(int64_t n, int64_t height, int64_t width, uint64_t seed);

struct LoadReport {
  int64_t loaded = 0;
  int64_t skipped_missing_mask = 0;
  std::vector<std::string> warnings;
};

/// BDD100K-style detection JSON (list of {name, labels: [{category, box2d}]})
/// plus per-image 0/255 mask PNGs named <stem>.png. car/bus/truck/train become
/// class 0, other categories are ignored. Images are resized bilinearly and
/// masks by nearest neighbour; lane masks are dilated after resizing.
std::vector<Sample> load_bdd_subset(const std::string& image_dir, const std::string& annotations,
                                    const std::string& da_mask_dir, const std::string& ll_mask_dir, int64_t height,
                                    int64_t width, LoadReport* report = nullptr);

/// Dataset described by a run config (synthetic or BDD paths).
std::vector<Sample> load_dataset(const RunConfig& cfg, LoadReport* report = nullptr);

/// Vehicle categories merged into the single detection class.
bool is_vehicle_category(const std::string& category);

struct Batch {
  torch::Tensor images;    // [B, 3, H, W] float in [0, 1]
  torch::Tensor drivable;  // [B, 1, H, W] float {0, 1}
  torch::Tensor lane;      // [B, 1, H, W] float {0, 1}, dilated label
  std::vector<ImageTargets> targets;
  std::vector<int64_t> indices;

  int64_t size() const { return images.size(0); }
};

Batch collate(const std::vector<Sample>& samples, const std::vector<int64_t>& indices);

/// Permutation of [0, n) for one epoch, fixed by (seed, epoch).
std::vector<int64_t> epoch_order(int64_t n, uint64_t seed, int64_t epoch);

}  // namespace rmtppad
