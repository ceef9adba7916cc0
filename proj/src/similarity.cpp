#include "rmtppad/similarity.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "rmtppad/errors.hpp"

namespace rmtppad {

std::string task_name(Task t) {
  switch (t) {
    case Task::detection: return "detection";
    case Task::drivable: return "drivable";
    case Task::lane: return "lane";
  }
  return "unknown";
}

std::optional<double> pairwise_cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw InputError("gradient vectors differ in length");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return std::nullopt;
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

std::string SimilarityHistogram::to_csv() const {
  std::ostringstream os;
  os.precision(6);
  os << "bin_lo,bin_hi,count\n";
  for (size_t i = 0; i < counts.size(); ++i) os << bin_edges[i] << "," << bin_edges[i + 1] << "," << counts[i] << "\n";
  return os.str();
}

std::pair<SimilarityHistogram, HistogramSummary> build_histogram(std::span<const double> samples, int64_t bins,
                                                                 std::pair<Task, Task> pair) {
  if (samples.empty()) throw InputError("histogram needs at least one sample");
  if (bins <= 0) throw ConfigError("histogram bin count must be positive");
  SimilarityHistogram h;
  h.pair = pair;
  h.bin_edges.resize(bins + 1);
  for (int64_t k = 0; k <= bins; ++k) h.bin_edges[k] = -1.0 + 2.0 * static_cast<double>(k) / static_cast<double>(bins);
  h.counts.assign(bins, 0);
  HistogramSummary s;
  double sum = 0.0;
  int64_t negative = 0;
  for (double v : samples) {
    if (!(v >= -1.0 && v <= 1.0)) throw InputError("similarity sample outside [-1, 1]");
    auto idx = std::clamp<int64_t>(static_cast<int64_t>(std::floor((v + 1.0) * bins / 2.0)), 0, bins - 1);
    while (idx + 1 < bins && v >= h.bin_edges[idx + 1]) ++idx;
    while (idx > 0 && v < h.bin_edges[idx]) --idx;
    ++h.counts[idx];
    sum += v;
    negative += v < 0.0 ? 1 : 0;
  }
  s.samples = static_cast<int64_t>(samples.size());
  s.mean = sum / static_cast<double>(s.samples);
  s.fraction_negative = static_cast<double>(negative) / static_cast<double>(s.samples);
  return {h, s};
}

void GradientConflictTracker::add(const std::vector<GradRecord>& records) {
  ++steps_;
  for (const auto& pair : kPairs) {
    const GradRecord* a = nullptr;
    const GradRecord* b = nullptr;
    for (const auto& r : records) {
      if (r.task == pair.first) a = &r;
      if (r.task == pair.second) b = &r;
    }
    if (a == nullptr || b == nullptr) continue;
    if (!a->valid || !b->valid) {
      ++skipped_;
      continue;
    }
    auto c = pairwise_cosine(a->vector, b->vector);
    if (!c) {
      ++skipped_;
      continue;
    }
    samples_[pair].push_back(*c);
  }
}

const std::vector<double>& GradientConflictTracker::samples(std::pair<Task, Task> pair) const {
  static const std::vector<double> kEmpty;
  auto it = samples_.find(pair);
  return it == samples_.end() ? kEmpty : it->second;
}

double GradientConflictTracker::fraction_negative() const {
  int64_t n = 0, neg = 0;
  for (const auto& [pair, v] : samples_) {
    n += static_cast<int64_t>(v.size());
    neg += std::count_if(v.begin(), v.end(), [](double x) { return x < 0.0; });
  }
  return n > 0 ? static_cast<double>(neg) / static_cast<double>(n) : 0.0;
}

}  // namespace rmtppad
