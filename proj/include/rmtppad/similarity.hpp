#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace rmtppad {

enum class Task { detection = 0, drivable = 1, lane = 2 };

std::string task_name(Task t);

/// Flattened gradient of one task's loss over the shared parameters.
struct GradRecord {
  int64_t step = 0;
  Task task = Task::detection;
  std::vector<double> vector;
  bool valid = true;  // false when any entry is non-finite
};

/// dot(a, b) / (|a| |b|), clamped to [-1, 1]. Empty when either norm is zero.
/// Throws InputError on length mismatch.
std::optional<double> pairwise_cosine(std::span<const double> a, std::span<const double> b);

struct SimilarityHistogram {
  std::pair<Task, Task> pair{Task::detection, Task::drivable};
  std::vector<double> bin_edges;  // bins + 1 edges over [-1, 1]
  std::vector<int64_t> counts;

  /// CSV with header "bin_lo,bin_hi,count".
  std::string to_csv() const;
};

struct HistogramSummary {
  double mean = 0.0;
  double fraction_negative = 0.0;
  int64_t samples = 0;
};

/// Equal-width bins over [-1, 1]; a value on an interior edge goes to the upper
/// bin and 1.0 goes to the last bin. Throws InputError on empty input or
/// samples outside [-1, 1].
std::pair<SimilarityHistogram, HistogramSummary> build_histogram(std::span<const double> samples, int64_t bins,
                                                                 std::pair<Task, Task> pair = {});

/// Accumulates pairwise cosine similarities over training steps for the three
/// task pairs (det, da), (det, ll), (da, ll).
class GradientConflictTracker {
 public:
  static constexpr std::array<std::pair<Task, Task>, 3> kPairs{
      std::pair{Task::detection, Task::drivable}, std::pair{Task::detection, Task::lane},
      std::pair{Task::drivable, Task::lane}};

  /// Adds one step's records. Invalid records and zero-norm pairs are skipped
  /// and counted.
  void add(const std::vector<GradRecord>& records);

  const std::vector<double>& samples(std::pair<Task, Task> pair) const;
  int64_t skipped() const { return skipped_; }
  int64_t steps() const { return steps_; }

  /// Fraction of negative samples pooled over all pairs.
  double fraction_negative() const;

 private:
  std::map<std::pair<Task, Task>, std::vector<double>> samples_;
  int64_t skipped_ = 0;
  int64_t steps_ = 0;
};

}  // namespace rmtppad
