#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <utility>

#include <json.hpp>

#include "realflow/core.hpp"
#include "realflow/splatting.hpp"

namespace realflow {

struct RiprConfig {
  std::array<double, 2> alpha_range{0.0, 2.0};
  SplatMode splat_mode = SplatMode::Softmax;
  HoleFillMode hole_fill_mode = HoleFillMode::Bhf;
  std::uint64_t rng_seed = 0;
  double max_double_hole_fraction = 0.05;

  void validate() const;
};

nlohmann::json to_json(const RiprConfig& cfg);
// Missing keys keep their defaults; unknown keys are rejected.
RiprConfig ripr_config_from_json(const nlohmann::json& j, RiprConfig base = {});

struct RenderedPair {
  ImageBuffer image1;
  ImageBuffer image2_new;
  FlowField flow_label;  // alpha * F12, exactly the flow that rendered image2_new
  DisturbanceFactor alpha;
  CoverageMask mask;
  // Share of pixels left unfilled: forward holes that the backward render
  // could not cover, or every forward hole when hole filling is off.
  double double_hole_fraction = 0.0;
  // Set when double_hole_fraction exceeds the configured limit. The pair is
  // still fully rendered; dropping it is the caller's call.
  bool quality_reject = false;
};

// (alpha * f12, (1 - alpha) * f21)
std::pair<FlowField, FlowField> disturb_flows(const FlowField& f12, const FlowField& f21,
                                              DisturbanceFactor alpha);

struct RenderInputs {
  const ImageBuffer& image1;
  const ImageBuffer& image2;
  const FlowField& flow_fwd;
  const FlowField& flow_bwd;
  const DepthMap* depth1 = nullptr;  // required unless splat_mode == sum
  const DepthMap* depth2 = nullptr;
};

RenderedPair render_pair(const RenderInputs& in, const RiprConfig& cfg, DisturbanceFactor alpha,
                         const SplatOptions& options = {});

// Uniform draw from cfg.alpha_range.
DisturbanceFactor sample_alpha(const RiprConfig& cfg, std::mt19937_64& rng);

// Independent, reproducible stream for one (seed, iteration, pair) triple.
std::mt19937_64 pair_rng(std::uint64_t seed, std::uint64_t iteration, std::uint64_t pair_index);

}  // namespace realflow
