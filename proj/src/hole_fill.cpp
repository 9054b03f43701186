#include "realflow/hole_fill.hpp"

#include <algorithm>

namespace realflow {

CoverageMask range_map(const FlowField& flow, const SplatOptions& options) {
  return coverage_from_flow(flow, options);
}

ImageBuffer bhf_fuse(const SplatResult& forward, const CoverageMask& mask, const SplatResult& backward) {
  require_same_size(forward.image, mask, "bhf forward render vs mask");
  require_same_size(forward.image, backward.image, "bhf forward vs backward render");
  if (forward.image.channels() != backward.image.channels()) {
    throw Error(ErrorCode::DimensionMismatch, "bhf renders disagree in channel count");
  }
  const auto c = static_cast<std::size_t>(forward.image.channels());
  const auto fwd = forward.image.data();
  const auto bwd = backward.image.data();
  const auto m = mask.data();
  std::vector<float> out(fwd.size());
  for (std::size_t p = 0; p < m.size(); ++p) {
    const double fill = 1.0 - static_cast<double>(m[p]);
    for (std::size_t k = 0; k < c; ++k) {
      const double v = static_cast<double>(fwd[p * c + k]) + fill * static_cast<double>(bwd[p * c + k]);
      out[p * c + k] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  return ImageBuffer(forward.image.width(), forward.image.height(), forward.image.channels(), std::move(out));
}

std::size_t count_double_holes(const CoverageMask& mask, const SplatResult& backward) {
  require_same_size(mask, backward.coverage, "double-hole count");
  const auto m = mask.data();
  const auto b = backward.coverage.data();
  std::size_t n = 0;
  for (std::size_t p = 0; p < m.size(); ++p) {
    if (m[p] == 0.0f && b[p] == 0.0f) ++n;
  }
  return n;
}

}  // namespace realflow
