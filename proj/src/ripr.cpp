#include "realflow/ripr.hpp"

#include <cmath>
#include <set>

#include "realflow/hole_fill.hpp"

namespace realflow {

using nlohmann::json;

void RiprConfig::validate() const {
  if (!std::isfinite(alpha_range[0]) || !std::isfinite(alpha_range[1]) || alpha_range[0] > alpha_range[1]) {
    throw Error(ErrorCode::InvalidArgument, "alpha_range must be finite with low <= high");
  }
  if (!(max_double_hole_fraction >= 0.0 && max_double_hole_fraction <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "max_double_hole_fraction must lie in [0,1]");
  }
}

json to_json(const RiprConfig& cfg) {
  return json{{"alpha_range", {cfg.alpha_range[0], cfg.alpha_range[1]}},
              {"splat_mode", to_string(cfg.splat_mode)},
              {"hole_fill_mode", to_string(cfg.hole_fill_mode)},
              {"rng_seed", cfg.rng_seed},
              {"max_double_hole_fraction", cfg.max_double_hole_fraction}};
}

RiprConfig ripr_config_from_json(const json& j, RiprConfig cfg) {
  static const std::set<std::string> known = {"alpha_range", "splat_mode", "hole_fill_mode", "rng_seed",
                                              "max_double_hole_fraction"};
  if (!j.is_object()) throw Error(ErrorCode::InvalidArgument, "ripr config must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.count(it.key())) throw Error(ErrorCode::InvalidArgument, "unknown ripr config key '" + it.key() + "'");
  }
  try {
    if (j.contains("alpha_range")) {
      const auto& r = j.at("alpha_range");
      if (!r.is_array() || r.size() != 2) throw Error(ErrorCode::InvalidArgument, "alpha_range must be [low, high]");
      cfg.alpha_range = {r[0].get<double>(), r[1].get<double>()};
    }
    if (j.contains("splat_mode")) cfg.splat_mode = parse_splat_mode(j.at("splat_mode").get<std::string>());
    if (j.contains("hole_fill_mode")) {
      cfg.hole_fill_mode = parse_hole_fill_mode(j.at("hole_fill_mode").get<std::string>());
    }
    if (j.contains("rng_seed")) cfg.rng_seed = j.at("rng_seed").get<std::uint64_t>();
    if (j.contains("max_double_hole_fraction")) {
      cfg.max_double_hole_fraction = j.at("max_double_hole_fraction").get<double>();
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("ripr config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

std::pair<FlowField, FlowField> disturb_flows(const FlowField& f12, const FlowField& f21,
                                              DisturbanceFactor alpha) {
  return {f12.scaled(alpha.value), f21.scaled(1.0 - alpha.value)};
}

RenderedPair render_pair(const RenderInputs& in, const RiprConfig& cfg, DisturbanceFactor alpha,
                         const SplatOptions& options) {
  require_same_size(in.image1, in.image2, "image1 vs image2");
  require_same_size(in.image1, in.flow_fwd, "image1 vs forward flow");
  require_same_size(in.image1, in.flow_bwd, "image1 vs backward flow");
  if (in.image1.channels() != in.image2.channels()) {
    throw Error(ErrorCode::DimensionMismatch, "image1 and image2 disagree in channel count");
  }
  if (in.depth1) require_same_size(in.image1, *in.depth1, "image1 vs depth1");
  if (in.depth2) require_same_size(in.image1, *in.depth2, "image2 vs depth2");

  auto [f12, f21] = disturb_flows(in.flow_fwd, in.flow_bwd, alpha);
  SplatResult forward = splat(cfg.splat_mode, in.image1, f12, in.depth1, options);
  CoverageMask mask = range_map(f12, options);

  std::size_t unfilled = 0;
  ImageBuffer image2_new;
  if (cfg.hole_fill_mode == HoleFillMode::Bhf) {
    const SplatResult backward = splat(cfg.splat_mode, in.image2, f21, in.depth2, options);
    image2_new = bhf_fuse(forward, mask, backward);
    unfilled = count_double_holes(mask, backward);
  } else {
    image2_new = std::move(forward.image);
    for (float m : mask.data()) unfilled += m == 0.0f ? 1 : 0;
  }

  RenderedPair out{in.image1, std::move(image2_new), std::move(f12), alpha, std::move(mask), 0.0, false};
  out.double_hole_fraction = static_cast<double>(unfilled) / static_cast<double>(in.image1.pixel_count());
  out.quality_reject = out.double_hole_fraction > cfg.max_double_hole_fraction;
  return out;
}

DisturbanceFactor sample_alpha(const RiprConfig& cfg, std::mt19937_64& rng) {
  const auto [low, high] = cfg.alpha_range;
  const double u = std::generate_canonical<double, 53>(rng);
  return DisturbanceFactor(low + (high - low) * u);
}

std::mt19937_64 pair_rng(std::uint64_t seed, std::uint64_t iteration, std::uint64_t pair_index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(iteration), static_cast<std::uint32_t>(iteration >> 32),
                    static_cast<std::uint32_t>(pair_index), static_cast<std::uint32_t>(pair_index >> 32)};
  return std::mt19937_64(seq);
}

}  // namespace realflow
