// realflow: render training pairs, generate datasets, drive the EM loop,
// evaluate flow predictions and summarize motion statistics.

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <thread>

#include <json.hpp>

#include "realflow/em.hpp"
#include "realflow/evalstats.hpp"
#include "realflow/io.hpp"
#include "realflow/manifest.hpp"
#include "realflow/ripr.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace realflow;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitQuality = 2;

unsigned default_workers() { return std::max(1u, std::thread::hardware_concurrency()); }

json load_json_file(const fs::path& path) {
  try {
    return json::parse(io::read_text(path));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::InvalidArgument, path.string() + ": " + e.what());
  }
}

struct RenderArgs {
  std::string img1, img2, flow_fwd, flow_bwd, depth1, depth2, out_dir, config;
  std::optional<double> alpha;
  std::vector<double> alpha_range;
  std::string splat;
  std::string hole_fill;
  std::optional<std::uint64_t> seed;
  std::optional<double> max_double_hole_fraction;
  unsigned workers = default_workers();
};

// Config file first, then explicit flags on top.
RiprConfig ripr_from_flags(const std::string& config, const std::vector<double>& alpha_range,
                           const std::string& splat, const std::string& hole_fill,
                           const std::optional<std::uint64_t>& seed, const std::optional<double>& max_dh) {
  RiprConfig cfg;
  if (!config.empty()) cfg = ripr_config_from_json(load_json_file(config));
  if (!alpha_range.empty()) cfg.alpha_range = {alpha_range[0], alpha_range[1]};
  if (!splat.empty()) cfg.splat_mode = parse_splat_mode(splat);
  if (!hole_fill.empty()) cfg.hole_fill_mode = parse_hole_fill_mode(hole_fill);
  if (seed) cfg.rng_seed = *seed;
  if (max_dh) cfg.max_double_hole_fraction = *max_dh;
  cfg.validate();
  return cfg;
}

int cmd_render(const RenderArgs& a) {
  RiprConfig cfg = ripr_from_flags(a.config, a.alpha_range, a.splat, a.hole_fill, a.seed,
                                   a.max_double_hole_fraction);
  if (cfg.splat_mode != SplatMode::Sum) {
    if (a.depth1.empty()) throw Error(ErrorCode::InvalidArgument, "--depth1 is required for " + to_string(cfg.splat_mode) + " splatting");
    if (a.depth2.empty() && cfg.hole_fill_mode == HoleFillMode::Bhf) {
      throw Error(ErrorCode::InvalidArgument, "--depth2 is required for " + to_string(cfg.splat_mode) + " splatting");
    }
  }

  const ImageBuffer i1 = io::read_image(a.img1);
  const ImageBuffer i2 = io::read_image(a.img2);
  const FlowField f12 = io::read_flo(a.flow_fwd);
  const FlowField f21 = io::read_flo(a.flow_bwd);
  std::optional<DepthMap> d1, d2;
  if (!a.depth1.empty()) d1 = io::read_pfm(a.depth1);
  if (!a.depth2.empty()) d2 = io::read_pfm(a.depth2);

  DisturbanceFactor alpha(1.0);
  if (a.alpha) {
    alpha = DisturbanceFactor(*a.alpha);
  } else {
    auto rng = pair_rng(cfg.rng_seed, 0, 0);
    alpha = sample_alpha(cfg, rng);
  }

  const RenderedPair pair = render_pair({i1, i2, f12, f21, d1 ? &*d1 : nullptr, d2 ? &*d2 : nullptr}, cfg,
                                        alpha, SplatOptions{a.workers});

  const fs::path out(a.out_dir);
  fs::create_directories(out);
  io::write_image(pair.image2_new, out / "image2_new.png");
  io::write_flo(pair.flow_label, out / "flow_label.flo");
  io::write_mask(pair.mask, out / "mask.png");
  SampleRecord rec;
  rec.image1_path = a.img1;
  rec.image2_path = "image2_new.png";
  rec.flow_path = "flow_label.flo";
  rec.alpha = alpha.value;
  io::write_text_atomic(out / "sample.json", dump_canonical(to_json(rec)));

  std::cout << "alpha=" << alpha.value << " double_hole_fraction=" << pair.double_hole_fraction << '\n';
  if (pair.quality_reject) {
    std::cerr << "warning: double-hole fraction " << pair.double_hole_fraction << " exceeds "
              << cfg.max_double_hole_fraction << " (QualityReject); outputs written anyway\n";
    return kExitQuality;
  }
  return kExitOk;
}

struct GenerateArgs {
  std::string corpus, estimator_cmd, depth_cmd, config, out, checkpoint;
  std::optional<std::uint64_t> seed;
  unsigned workers = default_workers();
  bool keep_rejected = false;
};

int cmd_generate(const GenerateArgs& a) {
  em::EmConfig cfg;
  cfg.corpus_root = a.corpus;
  cfg.estimator_cmd = a.estimator_cmd;
  cfg.depth_cmd = a.depth_cmd;
  cfg.workers = a.workers;
  cfg.keep_rejected = a.keep_rejected;
  cfg.ripr = ripr_from_flags(a.config, {}, "", "", a.seed, std::nullopt);

  const auto corpus = em::read_corpus(cfg.corpus_root);
  em::ShellRunner runner;
  const DatasetManifest m = em::generate_dataset(corpus, cfg, 0, a.checkpoint, a.out, runner, {&std::cerr});
  std::cout << "generated " << m.samples.size() << " samples, " << m.failures.size() << " failures -> "
            << (fs::path(a.out) / "manifest.json").string() << '\n';
  for (const auto& f : m.failures) {
    std::cerr << "  pair " << f.pair_index << " (" << f.source_video_id << ":" << f.source_frame_index
              << "): " << f.reason << '\n';
  }
  return kExitOk;
}

int cmd_em(const std::string& config, std::optional<unsigned> workers) {
  const fs::path cfg_path(config);
  em::EmConfig cfg = em::em_config_from_json(load_json_file(cfg_path), cfg_path.parent_path());
  if (workers) cfg.workers = *workers;
  em::ShellRunner runner;
  const em::EmState state = em::run(cfg, runner, {&std::cerr});

  std::cout << "completed " << state.iteration << " iteration(s); checkpoint " << state.checkpoint_path << '\n';
  std::cout << std::left << std::setw(10) << "iteration" << std::setw(20) << "metric" << "value\n";
  for (const auto& m : state.metrics_history) {
    std::cout << std::left << std::setw(10) << m.iteration << std::setw(20) << m.name << m.value << '\n';
  }
  return kExitOk;
}

std::vector<std::string> flo_names(const fs::path& dir) {
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".flo") names.push_back(e.path().filename().string());
  }
  std::sort(names.begin(), names.end());
  return names;
}

int cmd_eval(const std::string& pred_dir, const std::string& manifest_path, const std::string& gt_dir,
             const std::string& out_json) {
  MetricsAccumulator acc;
  if (!pred_dir.empty()) {
    const auto preds = flo_names(pred_dir);
    const auto gts = flo_names(gt_dir);
    if (preds != gts) throw Error(ErrorCode::InvalidArgument, "prediction and ground-truth file sets differ");
    for (const auto& name : preds) {
      acc.add(io::read_flo(fs::path(pred_dir) / name), io::read_flo(fs::path(gt_dir) / name));
    }
  } else {
    const DatasetManifest m = read_manifest(manifest_path);
    const fs::path base = fs::path(manifest_path).parent_path();
    for (const auto& s : m.samples) {
      const fs::path pred = fs::path(s.flow_path).is_absolute() ? fs::path(s.flow_path) : base / s.flow_path;
      const fs::path gt = fs::path(gt_dir) / fs::path(s.flow_path).relative_path();
      if (!fs::exists(gt)) throw Error(ErrorCode::InvalidArgument, "no ground truth for " + s.flow_path);
      acc.add(io::read_flo(pred), io::read_flo(gt));
    }
  }
  const std::string text = to_json(acc.result()).dump() + "\n";
  std::cout << text;
  if (!out_json.empty()) io::write_text_atomic(out_json, text);
  return kExitOk;
}

int cmd_stats(const std::string& manifest_path, const std::string& out_csv, const std::string& out_plot,
              unsigned workers) {
  const DatasetManifest m = read_manifest(manifest_path);
  const MotionHistogram hist =
      motion_histogram(m, fs::path(manifest_path).parent_path(), default_bin_edges(), workers);
  io::write_text_atomic(out_csv, histogram_csv(hist));
  if (!out_plot.empty()) io::write_text_atomic(out_plot, histogram_svg(hist));
  std::cout << "pixels=" << hist.total << " skipped_samples=" << hist.skipped_samples << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"realflow: realistic optical-flow training pair rendering and EM dataset generation"};
  app.require_subcommand(1);

  RenderArgs render;
  auto* r = app.add_subcommand("render", "Render one training pair from a frame pair and its estimates");
  r->add_option("--img1", render.img1, "First frame (PNG)")->required();
  r->add_option("--img2", render.img2, "Second frame (PNG)")->required();
  r->add_option("--flow-fwd", render.flow_fwd, "Forward flow 1->2 (.flo)")->required();
  r->add_option("--flow-bwd", render.flow_bwd, "Backward flow 2->1 (.flo)")->required();
  r->add_option("--depth1", render.depth1, "Inverse depth of frame 1 (PFM)");
  r->add_option("--depth2", render.depth2, "Inverse depth of frame 2 (PFM)");
  auto* alpha_opt = r->add_option("--alpha", render.alpha, "Fixed disturbance factor");
  r->add_option("--alpha-range", render.alpha_range, "Sample the disturbance uniformly from LOW HIGH")
      ->expected(2)
      ->excludes(alpha_opt);
  r->add_option("--splat", render.splat, "Splatting mode")->check(CLI::IsMember({"sum", "softmax", "max"}));
  r->add_option("--hole-fill", render.hole_fill, "Hole filling mode")->check(CLI::IsMember({"none", "bhf"}));
  r->add_option("--seed", render.seed, "RNG seed for the disturbance draw");
  r->add_option("--max-double-hole-fraction", render.max_double_hole_fraction, "Quality gate");
  r->add_option("--config", render.config, "RiprConfig JSON; flags override it");
  r->add_option("--workers", render.workers, "Parallel row bands")->check(CLI::PositiveNumber);
  r->add_option("--out-dir", render.out_dir, "Output directory")->required();

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Run one dataset-generation pass (E-step) over a corpus");
  g->add_option("--corpus", gen.corpus, "Corpus listing: img1<TAB>img2<TAB>video_id<TAB>frame_index")->required();
  g->add_option("--estimator-cmd", gen.estimator_cmd, "Flow command template with {img1} {img2} {out_flow}")
      ->required();
  g->add_option("--depth-cmd", gen.depth_cmd, "Depth command template with {img} {out_pfm}")->required();
  g->add_option("--config", gen.config, "RiprConfig JSON");
  g->add_option("--checkpoint", gen.checkpoint, "Substituted for {ckpt} in the estimator template");
  g->add_option("--seed", gen.seed, "Overrides rng_seed");
  g->add_option("--workers", gen.workers, "Frame pairs processed in parallel")->check(CLI::PositiveNumber);
  g->add_flag("--keep-rejected", gen.keep_rejected, "Keep samples that fail the double-hole gate");
  g->add_option("--out", gen.out, "Output dataset directory")->required();

  std::string em_config;
  std::optional<unsigned> em_workers;
  auto* e = app.add_subcommand("em", "Run or resume the EM loop described by a JSON config");
  e->add_option("--config", em_config, "EmConfig JSON")->required();
  e->add_option("--workers", em_workers, "Overrides the config's worker count")->check(CLI::PositiveNumber);

  std::string pred_dir, eval_manifest, gt_dir, eval_out;
  auto* ev = app.add_subcommand("eval", "Compute EPE and F1 against ground-truth flows");
  auto* pred_opt = ev->add_option("--pred-dir", pred_dir, "Directory of predicted .flo files");
  auto* man_opt = ev->add_option("--manifest", eval_manifest, "Evaluate the flow labels listed in a manifest");
  pred_opt->excludes(man_opt);
  ev->add_option("--gt-dir", gt_dir, "Ground-truth directory (matching file names / relative paths)")->required();
  ev->add_option("--out", eval_out, "Also write the metrics JSON here");

  std::string stats_manifest, out_csv, out_plot;
  unsigned stats_workers = default_workers();
  auto* s = app.add_subcommand("stats", "Histogram of motion magnitude over a generated dataset");
  s->add_option("--manifest", stats_manifest, "Dataset manifest")->required();
  s->add_option("--out-csv", out_csv, "CSV output: bin_low,bin_high,count")->required();
  s->add_option("--out-plot", out_plot, "SVG bar chart output");
  s->add_option("--workers", stats_workers, "Samples read in parallel")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    return app.exit(err) == 0 ? kExitOk : kExitError;
  }

  try {
    if (r->parsed()) return cmd_render(render);
    if (g->parsed()) return cmd_generate(gen);
    if (e->parsed()) return cmd_em(em_config, em_workers);
    if (ev->parsed()) {
      if (pred_dir.empty() == eval_manifest.empty()) {
        std::cerr << "error: exactly one of --pred-dir or --manifest is required\n";
        return kExitError;
      }
      return cmd_eval(pred_dir, eval_manifest, gt_dir, eval_out);
    }
    if (s->parsed()) return cmd_stats(stats_manifest, out_csv, out_plot, stats_workers);
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    return kExitError;
  }
  return kExitError;
}
