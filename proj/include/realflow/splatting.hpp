#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "realflow/core.hpp"

namespace realflow {

inline constexpr std::int64_t kNoSource = -1;

// Softmax pixels whose stabilized denominator falls below this are holes.
inline constexpr double kSoftmaxHoleThreshold = 1e-12;

// Max-mode candidate radius (Euclidean) around a target pixel center.
inline constexpr double kMaxSplatRadius = 0.70710678118654752440;

// Per-target accumulation state. Owned by a single worker per row band.
struct SplatAccumulator {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<double> numerator;    // H*W*C
  std::vector<double> denominator;  // H*W
  std::vector<double> weight_sum;   // H*W, sum of bilinear weights (range map before the cap)
  std::vector<double> winner_depth;           // max mode, -inf when empty
  std::vector<std::int64_t> winner_source;    // max mode, kNoSource when empty

  SplatAccumulator(int width, int height, int channels, bool track_winner);
};

struct SplatResult {
  ImageBuffer image;
  CoverageMask coverage;
  // Row-major source index chosen for each target (max mode only).
  std::optional<std::vector<std::int64_t>> winner_source;
};

struct SplatOptions {
  // Row bands processed in parallel. Output does not depend on this value.
  unsigned workers = 1;
};

// Unnormalized forward warp: image(p) = sum_q src(q) * b(p - (q + flow(q))).
SplatResult splat_sum(const ImageBuffer& src, const FlowField& flow, const SplatOptions& options = {});

// Depth-weighted average with weights exp(depth(q) - max(depth)).
SplatResult splat_softmax(const ImageBuffer& src, const FlowField& flow, const DepthMap& depth,
                          const SplatOptions& options = {});

// Copies the closest (largest inverse depth) source landing within kMaxSplatRadius
// of each target; equal depths resolve to the smallest row-major source index.
SplatResult splat_max(const ImageBuffer& src, const FlowField& flow, const DepthMap& depth,
                      const SplatOptions& options = {});

// Mode dispatch; depth is required for softmax and max.
SplatResult splat(SplatMode mode, const ImageBuffer& src, const FlowField& flow,
                  const DepthMap* depth, const SplatOptions& options = {});

// min(1, sum_q b(p - (q + flow(q)))). Shares the traversal used by every splat mode.
CoverageMask coverage_from_flow(const FlowField& flow, const SplatOptions& options = {});

}  // namespace realflow
