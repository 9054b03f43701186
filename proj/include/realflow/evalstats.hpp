#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "realflow/core.hpp"
#include "realflow/manifest.hpp"

namespace realflow {

struct FlowMetrics {
  double epe = 0.0;
  double f1 = 0.0;
  std::int64_t valid_count = 0;
};

// {"epe": float, "f1": float, "valid_count": int}
nlohmann::json to_json(const FlowMetrics& m);

// A pixel counts as valid when the mask is absent or mask(p) > 0.
double epe(const FlowField& pred, const FlowField& gt, const CoverageMask* valid = nullptr);

// KITTI outlier rule: error > 3 px and error > 5% of |gt|.
double f1_rate(const FlowField& pred, const FlowField& gt, const CoverageMask* valid = nullptr);

FlowMetrics evaluate(const FlowField& pred, const FlowField& gt, const CoverageMask* valid = nullptr);

// Pools several (pred, gt) pairs into one set of per-pixel metrics.
class MetricsAccumulator {
 public:
  void add(const FlowField& pred, const FlowField& gt, const CoverageMask* valid = nullptr);
  FlowMetrics result() const;

 private:
  double error_sum_ = 0.0;
  std::int64_t outliers_ = 0;
  std::int64_t valid_ = 0;
};

struct MotionHistogram {
  std::vector<double> bin_edges;
  std::vector<std::int64_t> counts;
  std::int64_t total = 0;
  std::int64_t skipped_samples = 0;
};

// [0, 0.1) followed by 32 log-spaced edges from 0.1 to 256 px.
std::vector<double> default_bin_edges();

// Magnitudes below the first edge land in the first bin, at or above the last
// edge in the last bin, so every pixel is counted.
class HistogramBuilder {
 public:
  explicit HistogramBuilder(std::vector<double> bin_edges);
  void add(const FlowField& flow);
  void merge(const HistogramBuilder& other);
  MotionHistogram result() const { return hist_; }
  std::size_t bin_of(double magnitude) const;

 private:
  MotionHistogram hist_;
};

// Reads every sample's flow label (paths relative to base_dir). Unreadable
// samples are skipped and counted.
MotionHistogram motion_histogram(const DatasetManifest& manifest, const std::filesystem::path& base_dir,
                                 std::vector<double> bin_edges, unsigned workers = 1);

// "bin_low,bin_high,count"
std::string histogram_csv(const MotionHistogram& hist);
// Bar chart with a log-scaled count axis.
std::string histogram_svg(const MotionHistogram& hist);

}  // namespace realflow
