#include "realflow/evalstats.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <thread>

#include "realflow/io.hpp"

namespace realflow {

using nlohmann::json;

json to_json(const FlowMetrics& m) {
  return json{{"epe", m.epe}, {"f1", m.f1}, {"valid_count", m.valid_count}};
}

void MetricsAccumulator::add(const FlowField& pred, const FlowField& gt, const CoverageMask* valid) {
  require_same_size(pred, gt, "prediction vs ground truth");
  if (valid) require_same_size(gt, *valid, "ground truth vs valid mask");
  for (int y = 0; y < gt.height(); ++y) {
    for (int x = 0; x < gt.width(); ++x) {
      if (valid && !(valid->at(x, y) > 0.0f)) continue;
      const double du = static_cast<double>(pred.u(x, y)) - gt.u(x, y);
      const double dv = static_cast<double>(pred.v(x, y)) - gt.v(x, y);
      const double err = std::hypot(du, dv);
      const double mag = std::hypot(static_cast<double>(gt.u(x, y)), static_cast<double>(gt.v(x, y)));
      error_sum_ += err;
      if (err > 3.0 && err > 0.05 * mag) ++outliers_;
      ++valid_;
    }
  }
}

FlowMetrics MetricsAccumulator::result() const {
  if (valid_ == 0) throw Error(ErrorCode::NoValidPixels, "no valid pixels to evaluate");
  return {error_sum_ / static_cast<double>(valid_),
          static_cast<double>(outliers_) / static_cast<double>(valid_), valid_};
}

FlowMetrics evaluate(const FlowField& pred, const FlowField& gt, const CoverageMask* valid) {
  MetricsAccumulator acc;
  acc.add(pred, gt, valid);
  return acc.result();
}

double epe(const FlowField& pred, const FlowField& gt, const CoverageMask* valid) {
  return evaluate(pred, gt, valid).epe;
}

double f1_rate(const FlowField& pred, const FlowField& gt, const CoverageMask* valid) {
  return evaluate(pred, gt, valid).f1;
}

std::vector<double> default_bin_edges() {
  std::vector<double> edges{0.0};
  constexpr int kLogEdges = 32;
  const double lo = std::log(0.1);
  const double hi = std::log(256.0);
  for (int i = 0; i < kLogEdges; ++i) edges.push_back(std::exp(lo + (hi - lo) * i / (kLogEdges - 1)));
  edges.front() = 0.0;
  edges[1] = 0.1;
  edges.back() = 256.0;
  return edges;
}

HistogramBuilder::HistogramBuilder(std::vector<double> bin_edges) {
  if (bin_edges.size() < 2) throw Error(ErrorCode::InvalidArgument, "histogram needs at least two edges");
  for (std::size_t i = 1; i < bin_edges.size(); ++i) {
    if (!(bin_edges[i] > bin_edges[i - 1])) {
      throw Error(ErrorCode::InvalidArgument, "histogram edges must be strictly increasing");
    }
  }
  hist_.counts.assign(bin_edges.size() - 1, 0);
  hist_.bin_edges = std::move(bin_edges);
}

std::size_t HistogramBuilder::bin_of(double magnitude) const {
  const auto& e = hist_.bin_edges;
  // first edge strictly greater than the magnitude closes its bin
  const auto it = std::upper_bound(e.begin(), e.end(), magnitude);
  if (it == e.begin()) return 0;
  return std::min(static_cast<std::size_t>(it - e.begin()) - 1, hist_.counts.size() - 1);
}

void HistogramBuilder::add(const FlowField& flow) {
  for (int y = 0; y < flow.height(); ++y) {
    for (int x = 0; x < flow.width(); ++x) {
      ++hist_.counts[bin_of(std::hypot(static_cast<double>(flow.u(x, y)), static_cast<double>(flow.v(x, y))))];
      ++hist_.total;
    }
  }
}

void HistogramBuilder::merge(const HistogramBuilder& other) {
  if (other.hist_.bin_edges != hist_.bin_edges) {
    throw Error(ErrorCode::InvalidArgument, "cannot merge histograms with different edges");
  }
  for (std::size_t i = 0; i < hist_.counts.size(); ++i) hist_.counts[i] += other.hist_.counts[i];
  hist_.total += other.hist_.total;
  hist_.skipped_samples += other.hist_.skipped_samples;
}

MotionHistogram motion_histogram(const DatasetManifest& manifest, const std::filesystem::path& base_dir,
                                 std::vector<double> bin_edges, unsigned workers) {
  const std::size_t n = manifest.samples.size();
  const std::size_t chunks = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(n, 1));
  std::vector<HistogramBuilder> partial(chunks, HistogramBuilder(bin_edges));
  std::vector<std::int64_t> skipped(chunks, 0);

  auto work = [&](std::size_t chunk) {
    for (std::size_t i = chunk * n / chunks; i < (chunk + 1) * n / chunks; ++i) {
      std::filesystem::path p(manifest.samples[i].flow_path);
      if (p.is_relative()) p = base_dir / p;
      try {
        partial[chunk].add(io::read_flo(p));
      } catch (const Error&) {
        ++skipped[chunk];
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    for (std::size_t c = 1; c < chunks; ++c) pool.emplace_back(work, c);
    work(0);
  }

  HistogramBuilder total(std::move(bin_edges));
  for (const auto& part : partial) total.merge(part);
  MotionHistogram hist = total.result();
  for (auto s : skipped) hist.skipped_samples += s;
  return hist;
}

std::string histogram_csv(const MotionHistogram& hist) {
  std::ostringstream out;
  out << "bin_low,bin_high,count\n";
  out << std::setprecision(17);
  for (std::size_t i = 0; i < hist.counts.size(); ++i) {
    out << hist.bin_edges[i] << ',' << hist.bin_edges[i + 1] << ',' << hist.counts[i] << '\n';
  }
  return out.str();
}

std::string histogram_svg(const MotionHistogram& hist) {
  constexpr double kWidth = 800.0;
  constexpr double kHeight = 400.0;
  constexpr double kMargin = 50.0;
  const std::size_t bins = hist.counts.size();
  const double max_log = std::log10(1.0 + static_cast<double>(
                                              *std::max_element(hist.counts.begin(), hist.counts.end())));
  const double bar_w = (kWidth - 2 * kMargin) / static_cast<double>(bins);
  const double plot_h = kHeight - 2 * kMargin;

  std::ostringstream svg;
  svg << std::fixed << std::setprecision(2);
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
      << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << kWidth / 2 << "\" y=\"25\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"16\">Histogram of motion magnitude (total "
      << hist.total << " px)</text>\n";
  for (std::size_t i = 0; i < bins; ++i) {
    const double h = max_log > 0 ? plot_h * std::log10(1.0 + static_cast<double>(hist.counts[i])) / max_log : 0;
    svg << "<rect x=\"" << kMargin + bar_w * static_cast<double>(i) << "\" y=\"" << kHeight - kMargin - h
        << "\" width=\"" << bar_w * 0.9 << "\" height=\"" << h << "\" fill=\"steelblue\">"
        << "<title>[" << hist.bin_edges[i] << ", " << hist.bin_edges[i + 1] << "): " << hist.counts[i]
        << "</title></rect>\n";
  }
  svg << "<line x1=\"" << kMargin << "\" y1=\"" << kHeight - kMargin << "\" x2=\"" << kWidth - kMargin
      << "\" y2=\"" << kHeight - kMargin << "\" stroke=\"black\"/>\n";
  svg << "<text x=\"" << kWidth / 2 << "\" y=\"" << kHeight - 15
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">motion magnitude (px, log bins); "
         "bar height log10(1 + count)</text>\n";
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace realflow
