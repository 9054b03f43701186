#include "realflow/splatting.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <thread>

namespace realflow {

SplatAccumulator::SplatAccumulator(int w, int h, int c, bool track_winner)
    : width(w), height(h), channels(c) {
  const auto n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  numerator.assign(n * static_cast<std::size_t>(c), 0.0);
  denominator.assign(n, 0.0);
  weight_sum.assign(n, 0.0);
  if (track_winner) {
    winner_depth.assign(n, -std::numeric_limits<double>::infinity());
    winner_source.assign(n, kNoSource);
  }
}

namespace {

struct Landing {
  std::int64_t source;
  double x;
  double y;
};

// Source landings bucketed by floor(y), each bucket kept in source order.
// A target row r only receives from buckets r-1 and r, so any partition of
// target rows visits each target's contributors in the same order.
class LandingIndex {
 public:
  explicit LandingIndex(const FlowField& flow) : width_(flow.width()), height_(flow.height()) {
    // bucket b holds floor(y) == b - 1, for floor(y) in [-1, H-1]
    const auto buckets = static_cast<std::size_t>(height_) + 1;
    std::vector<std::size_t> counts(buckets + 1, 0);
    std::vector<std::pair<std::size_t, Landing>> kept;
    kept.reserve(flow.pixel_count());
    for (int qy = 0; qy < height_; ++qy) {
      for (int qx = 0; qx < width_; ++qx) {
        const double x = static_cast<double>(qx) + static_cast<double>(flow.u(qx, qy));
        const double y = static_cast<double>(qy) + static_cast<double>(flow.v(qx, qy));
        // b > 0 needs |p - x| < 1 for some p in [0, W-1]; everything else lands off-grid.
        if (!(x > -1.0 && x < width_ && y > -1.0 && y < height_)) continue;
        const auto bucket = static_cast<std::size_t>(static_cast<int>(std::floor(y)) + 1);
        const std::int64_t source = static_cast<std::int64_t>(qy) * width_ + qx;
        kept.push_back({bucket, Landing{source, x, y}});
        ++counts[bucket + 1];
      }
    }
    for (std::size_t b = 1; b < counts.size(); ++b) counts[b] += counts[b - 1];
    offsets_ = counts;
    landings_.resize(kept.size());
    for (const auto& [bucket, landing] : kept) landings_[counts[bucket]++] = landing;
  }

  // fn(target_index, source_index, bilinear_weight, dx, dy) for every pair with
  // a nonzero weight and a target row in [row_begin, row_end).
  template <typename Fn>
  void visit_rows(int row_begin, int row_end, Fn&& fn) const {
    for (int base = row_begin - 1; base < row_end; ++base) {
      if (base < -1 || base > height_ - 1) continue;
      const auto bucket = static_cast<std::size_t>(base + 1);
      for (std::size_t i = offsets_[bucket]; i < offsets_[bucket + 1]; ++i) {
        const Landing& l = landings_[i];
        const int x0 = static_cast<int>(std::floor(l.x));
        for (int ty = base; ty <= base + 1; ++ty) {
          if (ty < row_begin || ty >= row_end || ty < 0 || ty >= height_) continue;
          for (int tx = x0; tx <= x0 + 1; ++tx) {
            if (tx < 0 || tx >= width_) continue;
            const double dx = static_cast<double>(tx) - l.x;
            const double dy = static_cast<double>(ty) - l.y;
            const double w = bilinear_kernel({dx, dy});
            if (w <= 0.0) continue;
            fn(static_cast<std::size_t>(ty) * width_ + tx, l.source, w, dx, dy);
          }
        }
      }
    }
  }

 private:
  int width_;
  int height_;
  std::vector<std::size_t> offsets_;
  std::vector<Landing> landings_;
};

// Runs fn(row_begin, row_end) over disjoint row bands.
template <typename Fn>
void for_row_bands(int height, unsigned workers, Fn&& fn) {
  const unsigned bands = std::clamp<unsigned>(workers, 1u, static_cast<unsigned>(height));
  if (bands == 1) {
    fn(0, height);
    return;
  }
  std::vector<std::jthread> pool;
  pool.reserve(bands);
  for (unsigned b = 0; b < bands; ++b) {
    const int begin = static_cast<int>(static_cast<long long>(height) * b / bands);
    const int end = static_cast<int>(static_cast<long long>(height) * (b + 1) / bands);
    pool.emplace_back([&fn, begin, end] { fn(begin, end); });
  }
}

enum class Policy { Sum, Softmax, Max };

SplatAccumulator accumulate(Policy policy, const ImageBuffer* src, const FlowField& flow,
                            const DepthMap* depth, unsigned workers) {
  const int channels = src ? src->channels() : 0;
  SplatAccumulator acc(flow.width(), flow.height(), channels, policy == Policy::Max);
  const LandingIndex index(flow);

  std::vector<double> weights;
  if (policy == Policy::Softmax) {
    const auto d = depth->data();
    const double d_max = *std::max_element(d.begin(), d.end());
    weights.resize(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) weights[i] = std::exp(static_cast<double>(d[i]) - d_max);
  }
  const auto src_data = src ? src->data() : std::span<const float>{};
  const auto depth_data = depth ? depth->data() : std::span<const float>{};
  const auto c = static_cast<std::size_t>(channels);
  constexpr double kRadiusSq = kMaxSplatRadius * kMaxSplatRadius;

  for_row_bands(flow.height(), workers, [&](int begin, int end) {
    index.visit_rows(begin, end, [&](std::size_t t, std::int64_t q, double b, double dx, double dy) {
      acc.weight_sum[t] += b;
      const auto qs = static_cast<std::size_t>(q);
      switch (policy) {
        case Policy::Sum:
          for (std::size_t k = 0; k < c; ++k) acc.numerator[t * c + k] += src_data[qs * c + k] * b;
          acc.denominator[t] += b;
          break;
        case Policy::Softmax: {
          const double w = weights[qs] * b;
          for (std::size_t k = 0; k < c; ++k) acc.numerator[t * c + k] += src_data[qs * c + k] * w;
          acc.denominator[t] += w;
          break;
        }
        case Policy::Max: {
          if (dx * dx + dy * dy > kRadiusSq) break;
          const double d = depth_data[qs];
          const std::int64_t cur = acc.winner_source[t];
          if (cur == kNoSource || d > acc.winner_depth[t] || (d == acc.winner_depth[t] && q < cur)) {
            acc.winner_depth[t] = d;
            acc.winner_source[t] = q;
          }
          break;
        }
      }
    });
  });
  return acc;
}

CoverageMask coverage_of(const SplatAccumulator& acc) {
  std::vector<float> m(acc.weight_sum.size());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = static_cast<float>(std::min(1.0, acc.weight_sum[i]));
  return CoverageMask(acc.width, acc.height, std::move(m));
}

void check_inputs(const ImageBuffer& src, const FlowField& flow, const DepthMap* depth) {
  require_same_size(src, flow, "splat source vs flow");
  if (depth) require_same_size(src, *depth, "splat source vs depth");
}

}  // namespace

SplatResult splat_sum(const ImageBuffer& src, const FlowField& flow, const SplatOptions& options) {
  check_inputs(src, flow, nullptr);
  const SplatAccumulator acc = accumulate(Policy::Sum, &src, flow, nullptr, options.workers);
  std::vector<float> out(acc.numerator.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(acc.numerator[i]);
  return {ImageBuffer(src.width(), src.height(), src.channels(), std::move(out)), coverage_of(acc),
          std::nullopt};
}

SplatResult splat_softmax(const ImageBuffer& src, const FlowField& flow, const DepthMap& depth,
                          const SplatOptions& options) {
  check_inputs(src, flow, &depth);
  const SplatAccumulator acc = accumulate(Policy::Softmax, &src, flow, &depth, options.workers);
  const auto c = static_cast<std::size_t>(src.channels());
  std::vector<float> out(acc.numerator.size(), 0.0f);
  for (std::size_t t = 0; t < acc.denominator.size(); ++t) {
    const double den = acc.denominator[t];
    if (den < kSoftmaxHoleThreshold) continue;
    for (std::size_t k = 0; k < c; ++k) out[t * c + k] = static_cast<float>(acc.numerator[t * c + k] / den);
  }
  return {ImageBuffer(src.width(), src.height(), src.channels(), std::move(out)), coverage_of(acc),
          std::nullopt};
}

SplatResult splat_max(const ImageBuffer& src, const FlowField& flow, const DepthMap& depth,
                      const SplatOptions& options) {
  check_inputs(src, flow, &depth);
  SplatAccumulator acc = accumulate(Policy::Max, &src, flow, &depth, options.workers);
  const auto c = static_cast<std::size_t>(src.channels());
  const auto src_data = src.data();
  std::vector<float> out(acc.numerator.size(), 0.0f);
  for (std::size_t t = 0; t < acc.winner_source.size(); ++t) {
    const std::int64_t q = acc.winner_source[t];
    if (q == kNoSource) continue;
    for (std::size_t k = 0; k < c; ++k) out[t * c + k] = src_data[static_cast<std::size_t>(q) * c + k];
  }
  CoverageMask coverage = coverage_of(acc);
  return {ImageBuffer(src.width(), src.height(), src.channels(), std::move(out)), std::move(coverage),
          std::move(acc.winner_source)};
}

SplatResult splat(SplatMode mode, const ImageBuffer& src, const FlowField& flow, const DepthMap* depth,
                  const SplatOptions& options) {
  if (mode == SplatMode::Sum) return splat_sum(src, flow, options);
  if (!depth) {
    throw Error(ErrorCode::InvalidArgument, to_string(mode) + " splatting requires a depth map");
  }
  if (mode == SplatMode::Softmax) return splat_softmax(src, flow, *depth, options);
  return splat_max(src, flow, *depth, options);
}

CoverageMask coverage_from_flow(const FlowField& flow, const SplatOptions& options) {
  return coverage_of(accumulate(Policy::Sum, nullptr, flow, nullptr, options.workers));
}

}  // namespace realflow
