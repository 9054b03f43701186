#pragma once

#include <cstddef>

#include "realflow/core.hpp"
#include "realflow/splatting.hpp"

namespace realflow {

// Range-map check: M(p) = min(1, sum_q b(p - (q + flow(q)))). Holes are M == 0.
CoverageMask range_map(const FlowField& flow, const SplatOptions& options = {});

// Bi-directional hole filling: I2' = clamp(I1s + (1 - M) * I2s, 0, 1), with M
// used as a continuous weight. `mask` must be the range map of the forward flow
// that rendered `forward`.
ImageBuffer bhf_fuse(const SplatResult& forward, const CoverageMask& mask, const SplatResult& backward);

// Pixels that are holes in the forward render (M == 0) and received nothing from
// the backward render either; they stay black after fusion.
std::size_t count_double_holes(const CoverageMask& mask, const SplatResult& backward);

}  // namespace realflow
