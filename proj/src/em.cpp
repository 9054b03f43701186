#include "realflow/em.hpp"

#include <spawn.h>
#include <sys/wait.h>

#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "realflow/io.hpp"

extern char** environ;

namespace realflow::em {

using nlohmann::json;

int ShellRunner::run(const std::string& command_line) {
  const char* argv[] = {"/bin/sh", "-c", command_line.c_str(), nullptr};
  pid_t pid = 0;
  if (posix_spawn(&pid, "/bin/sh", nullptr, nullptr, const_cast<char* const*>(argv), environ) != 0) {
    return 127;
  }
  int status = 0;
  while (waitpid(pid, &status, 0) < 0) {
    if (errno != EINTR) return 127;
  }
  if (WIFEXITED(status)) return WEXITSTATUS(status);
  return 128 + (WIFSIGNALED(status) ? WTERMSIG(status) : 0);
}

std::string shell_quote(const std::string& text) {
  std::string out = "'";
  for (char c : text) {
    if (c == '\'') {
      out += "'\\''";
    } else {
      out += c;
    }
  }
  return out + "'";
}

std::string expand_template(const std::string& tmpl, const std::map<std::string, std::string>& values) {
  std::string out;
  std::size_t pos = 0;
  while (pos < tmpl.size()) {
    const std::size_t open = tmpl.find('{', pos);
    if (open == std::string::npos) break;
    const std::size_t close = tmpl.find('}', open);
    if (close == std::string::npos) break;
    out.append(tmpl, pos, open - pos);
    const auto it = values.find(tmpl.substr(open + 1, close - open - 1));
    if (it != values.end()) {
      out += shell_quote(it->second);
    } else {
      out.append(tmpl, open, close - open + 1);
    }
    pos = close + 1;
  }
  out.append(tmpl, std::min(pos, tmpl.size()));
  return out;
}

namespace {

void require_placeholders(const std::string& tmpl, std::initializer_list<const char*> names,
                          const char* what) {
  for (const char* name : names) {
    if (tmpl.find(std::string("{") + name + "}") == std::string::npos) {
      throw Error(ErrorCode::InvalidArgument,
                  std::string(what) + " is missing the {" + name + "} placeholder");
    }
  }
}

const char* phase_name(EmPhase p) {
  switch (p) {
    case EmPhase::Ready: return "ready";
    case EmPhase::Generated: return "generated";
    case EmPhase::Trained: return "trained";
  }
  return "ready";
}

EmPhase parse_phase(const std::string& s) {
  if (s == "ready") return EmPhase::Ready;
  if (s == "generated") return EmPhase::Generated;
  if (s == "trained") return EmPhase::Trained;
  throw Error(ErrorCode::SchemaViolation, "unknown EM phase '" + s + "'");
}

}  // namespace

void EmConfig::validate() const {
  if (iterations < 1) throw Error(ErrorCode::InvalidArgument, "iterations must be >= 1");
  require_placeholders(estimator_cmd, {"img1", "img2", "out_flow"}, "estimator_cmd");
  require_placeholders(depth_cmd, {"img", "out_pfm"}, "depth_cmd");
  require_placeholders(trainer_cmd, {"manifest", "init_ckpt", "out_ckpt"}, "trainer_cmd");
  if (eval_cmd) require_placeholders(*eval_cmd, {"ckpt", "out_metrics"}, "eval_cmd");
  if (workdir.empty()) throw Error(ErrorCode::InvalidArgument, "workdir must be set");
  if (workers == 0) throw Error(ErrorCode::InvalidArgument, "workers must be >= 1");
  ripr.validate();
}

EmConfig em_config_from_json(const json& j, const fs::path& base_dir) {
  static const std::set<std::string> known = {
      "corpus_root", "iterations", "estimator_cmd", "depth_cmd", "trainer_cmd", "eval_cmd",
      "workdir", "init_checkpoint", "workers", "keep_rejected", "ripr"};
  if (!j.is_object()) throw Error(ErrorCode::InvalidArgument, "EM config must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.count(it.key())) throw Error(ErrorCode::InvalidArgument, "unknown EM config key '" + it.key() + "'");
  }
  auto resolve = [&](const std::string& p) {
    const fs::path path(p);
    return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
  };
  EmConfig cfg;
  try {
    if (j.contains("corpus_root")) cfg.corpus_root = resolve(j.at("corpus_root").get<std::string>());
    if (j.contains("iterations")) cfg.iterations = j.at("iterations").get<int>();
    if (j.contains("estimator_cmd")) cfg.estimator_cmd = j.at("estimator_cmd").get<std::string>();
    if (j.contains("depth_cmd")) cfg.depth_cmd = j.at("depth_cmd").get<std::string>();
    if (j.contains("trainer_cmd")) cfg.trainer_cmd = j.at("trainer_cmd").get<std::string>();
    if (j.contains("eval_cmd") && !j.at("eval_cmd").is_null()) cfg.eval_cmd = j.at("eval_cmd").get<std::string>();
    if (j.contains("workdir")) cfg.workdir = resolve(j.at("workdir").get<std::string>());
    if (j.contains("init_checkpoint")) cfg.init_checkpoint = resolve(j.at("init_checkpoint").get<std::string>()).string();
    if (j.contains("workers")) cfg.workers = j.at("workers").get<unsigned>();
    if (j.contains("keep_rejected")) cfg.keep_rejected = j.at("keep_rejected").get<bool>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("EM config: ") + e.what());
  }
  if (j.contains("ripr")) cfg.ripr = ripr_config_from_json(j.at("ripr"));
  return cfg;
}

std::vector<CorpusEntry> read_corpus(const fs::path& listing) {
  std::ifstream in(listing);
  if (!in) throw Error(ErrorCode::IoError, "cannot open corpus listing " + listing.string());
  const fs::path base = listing.parent_path();
  std::vector<CorpusEntry> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, '\t')) cols.push_back(col);
    if (cols.size() != 4) {
      throw Error(ErrorCode::InvalidArgument, listing.string() + ":" + std::to_string(line_no) +
                                                  ": expected 4 tab-separated fields");
    }
    CorpusEntry e;
    e.image1 = fs::path(cols[0]).is_absolute() ? fs::path(cols[0]) : base / cols[0];
    e.image2 = fs::path(cols[1]).is_absolute() ? fs::path(cols[1]) : base / cols[1];
    e.video_id = cols[2];
    try {
      std::size_t used = 0;
      e.frame_index = std::stoll(cols[3], &used);
      if (used != cols[3].size()) throw std::invalid_argument(cols[3]);
    } catch (const std::logic_error&) {
      throw Error(ErrorCode::InvalidArgument,
                  listing.string() + ":" + std::to_string(line_no) + ": bad frame index '" + cols[3] + "'");
    }
    out.push_back(std::move(e));
  }
  return out;
}

json to_json(const EmState& s) {
  json history = json::array();
  for (const auto& m : s.metrics_history) {
    history.push_back({{"iteration", m.iteration}, {"metric", m.name}, {"value", m.value}});
  }
  return json{{"iteration", s.iteration},
              {"checkpoint_path", s.checkpoint_path},
              {"manifest_path", s.manifest_path},
              {"metrics_history", std::move(history)},
              {"phase", phase_name(s.phase)}};
}

EmState state_from_json(const json& j) {
  try {
    EmState s;
    s.iteration = j.at("iteration").get<std::int64_t>();
    s.checkpoint_path = j.at("checkpoint_path").get<std::string>();
    s.manifest_path = j.at("manifest_path").get<std::string>();
    s.phase = parse_phase(j.at("phase").get<std::string>());
    for (const auto& m : j.at("metrics_history")) {
      s.metrics_history.push_back(
          {m.at("iteration").get<std::int64_t>(), m.at("metric").get<std::string>(), m.at("value").get<double>()});
    }
    return s;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SchemaViolation, std::string("EM state: ") + e.what());
  }
}

fs::path state_path(const EmConfig& cfg) { return cfg.workdir / "state.json"; }

void save_state(const EmState& state, const fs::path& path) {
  io::write_text_atomic(path, dump_canonical(to_json(state)));
}

std::optional<EmState> load_state(const fs::path& path) {
  if (!fs::exists(path)) return std::nullopt;
  try {
    return state_from_json(json::parse(io::read_text(path)));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::SchemaViolation, path.string() + ": " + e.what());
  }
}

fs::path iteration_dir(const EmConfig& cfg, std::int64_t iteration) {
  return cfg.workdir / ("iter" + std::to_string(iteration));
}

namespace {

std::string pair_tag(std::size_t index) {
  std::ostringstream s;
  s << std::setw(6) << std::setfill('0') << index;
  return s.str();
}

struct PairOutcome {
  std::optional<SampleRecord> sample;
  std::optional<FailureRecord> failure;
  std::string log_line;
};

PairOutcome process_pair(const CorpusEntry& entry, std::size_t index, const EmConfig& cfg,
                         std::int64_t iteration, const std::string& checkpoint, const fs::path& out_dir,
                         CommandRunner& runner) {
  const std::string tag = pair_tag(index);
  const fs::path est_dir = out_dir / "estimates" / tag;
  const fs::path sample_rel = fs::path("samples") / tag;
  PairOutcome outcome;
  auto fail = [&](const std::string& reason) {
    outcome.failure = FailureRecord{static_cast<std::int64_t>(index), entry.video_id, entry.frame_index, reason};
    outcome.log_line = "pair " + tag + " failed: " + reason;
    return outcome;
  };

  try {
    fs::create_directories(est_dir);
    const fs::path fwd = est_dir / "flow_fwd.flo";
    const fs::path bwd = est_dir / "flow_bwd.flo";
    const fs::path d1 = est_dir / "depth1.pfm";
    const fs::path d2 = est_dir / "depth2.pfm";

    auto estimate_flow = [&](const fs::path& a, const fs::path& b, const fs::path& out) {
      fs::remove(out);
      const int rc = runner.run(expand_template(
          cfg.estimator_cmd,
          {{"img1", a.string()}, {"img2", b.string()}, {"out_flow", out.string()}, {"ckpt", checkpoint}}));
      if (rc != 0) {
        throw Error(ErrorCode::EstimatorFailed, "flow estimator exited " + std::to_string(rc));
      }
      try {
        return io::read_flo(out);
      } catch (const Error& e) {
        throw Error(ErrorCode::EstimatorFailed, std::string("flow estimator output unusable: ") + e.what());
      }
    };
    auto estimate_depth = [&](const fs::path& img, const fs::path& out) {
      fs::remove(out);
      const int rc = runner.run(expand_template(cfg.depth_cmd, {{"img", img.string()}, {"out_pfm", out.string()}}));
      if (rc != 0) throw Error(ErrorCode::EstimatorFailed, "depth estimator exited " + std::to_string(rc));
      try {
        return io::read_pfm(out);
      } catch (const Error& e) {
        throw Error(ErrorCode::EstimatorFailed, std::string("depth estimator output unusable: ") + e.what());
      }
    };

    const FlowField f12 = estimate_flow(entry.image1, entry.image2, fwd);
    const FlowField f21 = estimate_flow(entry.image2, entry.image1, bwd);
    const DepthMap depth1 = estimate_depth(entry.image1, d1);
    const DepthMap depth2 = estimate_depth(entry.image2, d2);
    const ImageBuffer i1 = io::read_image(entry.image1);
    const ImageBuffer i2 = io::read_image(entry.image2);

    auto rng = pair_rng(cfg.ripr.rng_seed, static_cast<std::uint64_t>(iteration), index);
    const DisturbanceFactor alpha = sample_alpha(cfg.ripr, rng);
    const RenderedPair pair = render_pair({i1, i2, f12, f21, &depth1, &depth2}, cfg.ripr, alpha);
    if (pair.quality_reject && !cfg.keep_rejected) {
      return fail("QualityReject: double-hole fraction " + std::to_string(pair.double_hole_fraction));
    }

    fs::create_directories(out_dir / sample_rel);
    SampleRecord rec;
    rec.image1_path = (sample_rel / "image1.png").string();
    rec.image2_path = (sample_rel / "image2.png").string();
    rec.flow_path = (sample_rel / "flow.flo").string();
    rec.alpha = alpha.value;
    rec.source_video_id = entry.video_id;
    rec.source_frame_index = entry.frame_index;
    rec.em_iteration = iteration;
    io::write_image(pair.image1, out_dir / rec.image1_path);
    io::write_image(pair.image2_new, out_dir / rec.image2_path);
    io::write_flo(pair.flow_label, out_dir / rec.flow_path);
    outcome.sample = rec;
    std::ostringstream line;
    line << "pair " << tag << " ok alpha=" << alpha.value << " double_holes=" << pair.double_hole_fraction;
    outcome.log_line = line.str();
    return outcome;
  } catch (const Error& e) {
    return fail(e.what());
  } catch (const fs::filesystem_error& e) {
    return fail(std::string("IoError: ") + e.what());
  }
}

}  // namespace

DatasetManifest generate_dataset(const std::vector<CorpusEntry>& corpus, const EmConfig& cfg,
                                 std::int64_t iteration, const std::string& checkpoint, const fs::path& out_dir,
                                 CommandRunner& runner, const EStepOptions& options) {
  if (corpus.empty()) throw Error(ErrorCode::CorpusEmpty, "corpus has no frame pairs");
  cfg.ripr.validate();
  fs::create_directories(out_dir);

  std::vector<PairOutcome> outcomes(corpus.size());
  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < corpus.size(); i = next++) {
      outcomes[i] = process_pair(corpus[i], i, cfg, iteration, checkpoint, out_dir, runner);
      if (options.log) {
        std::lock_guard lock(log_mutex);
        *options.log << outcomes[i].log_line << '\n';
      }
    }
  };
  {
    const auto n = std::min<std::size_t>(std::max(cfg.workers, 1u), corpus.size());
    std::vector<std::jthread> pool;
    for (std::size_t w = 1; w < n; ++w) pool.emplace_back(worker);
    worker();
  }

  DatasetManifest m;
  m.em_iteration = iteration;
  m.created_at = utc_timestamp_now();
  m.source_description = "corpus " + cfg.corpus_root.string() + "; flows from checkpoint " +
                         (checkpoint.empty() ? std::string("<none>") : checkpoint);
  m.alpha_range = cfg.ripr.alpha_range;
  m.splat_mode = cfg.ripr.splat_mode;
  m.hole_fill_mode = cfg.ripr.hole_fill_mode;
  for (auto& o : outcomes) {
    if (o.sample) m.samples.push_back(std::move(*o.sample));
    if (o.failure) m.failures.push_back(std::move(*o.failure));
  }
  write_manifest(m, out_dir / "manifest.json");
  return m;
}

DatasetManifest e_step(const EmConfig& cfg, const EmState& state, CommandRunner& runner,
                       const EStepOptions& options) {
  const auto corpus = read_corpus(cfg.corpus_root);
  const std::int64_t t = state.iteration + 1;
  return generate_dataset(corpus, cfg, t, state.checkpoint_path, iteration_dir(cfg, t), runner, options);
}

EmState m_step(const EmConfig& cfg, const DatasetManifest& manifest, const EmState& state,
               CommandRunner& runner) {
  if (manifest.samples.empty()) {
    throw Error(ErrorCode::TrainerFailed, "manifest has no samples to train on");
  }
  const std::int64_t t = state.iteration + 1;
  const fs::path out_ckpt = iteration_dir(cfg, t) / "checkpoint";
  std::error_code ec;
  fs::remove_all(out_ckpt, ec);
  const int rc = runner.run(expand_template(cfg.trainer_cmd, {{"manifest", state.manifest_path},
                                                              {"init_ckpt", state.checkpoint_path},
                                                              {"out_ckpt", out_ckpt.string()}}));
  if (rc != 0) throw Error(ErrorCode::TrainerFailed, "trainer exited " + std::to_string(rc));
  if (!fs::exists(out_ckpt)) throw Error(ErrorCode::TrainerFailed, "trainer produced no checkpoint at " + out_ckpt.string());

  EmState next = state;
  next.iteration = t;
  next.checkpoint_path = out_ckpt.string();
  next.phase = EmPhase::Trained;
  return next;
}

namespace {

void evaluate_checkpoint(const EmConfig& cfg, EmState& state, CommandRunner& runner) {
  const fs::path out = iteration_dir(cfg, state.iteration) / "metrics.json";
  fs::remove(out);
  const int rc = runner.run(expand_template(*cfg.eval_cmd, {{"ckpt", state.checkpoint_path}, {"out_metrics", out.string()}}));
  if (rc != 0) throw Error(ErrorCode::IoError, "eval command exited " + std::to_string(rc));
  json metrics;
  try {
    metrics = json::parse(io::read_text(out));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::SchemaViolation, out.string() + ": " + e.what());
  }
  if (!metrics.is_object()) throw Error(ErrorCode::SchemaViolation, out.string() + ": expected a JSON object");
  for (auto it = metrics.begin(); it != metrics.end(); ++it) {
    if (it.value().is_number()) state.metrics_history.push_back({state.iteration, it.key(), it.value().get<double>()});
  }
}

}  // namespace

EmState run(const EmConfig& cfg, CommandRunner& runner, const RunOptions& options) {
  cfg.validate();
  fs::create_directories(cfg.workdir);
  const fs::path sp = state_path(cfg);

  EmState state;
  if (auto loaded = load_state(sp)) {
    state = std::move(*loaded);
  } else {
    state.checkpoint_path = cfg.init_checkpoint;
    save_state(state, sp);
  }
  auto log = [&](const std::string& line) {
    if (options.log) *options.log << line << '\n';
  };

  while (true) {
    if (state.phase == EmPhase::Ready) {
      if (state.iteration >= cfg.iterations) break;
      const std::int64_t t = state.iteration + 1;
      log("iteration " + std::to_string(t) + ": E-step");
      e_step(cfg, state, runner, {options.log});
      state.manifest_path = (iteration_dir(cfg, t) / "manifest.json").string();
      state.phase = EmPhase::Generated;
      save_state(state, sp);
    } else if (state.phase == EmPhase::Generated) {
      log("iteration " + std::to_string(state.iteration + 1) + ": M-step");
      const DatasetManifest manifest = read_manifest(state.manifest_path);
      state = m_step(cfg, manifest, state, runner);
      save_state(state, sp);
    } else {
      if (cfg.eval_cmd) {
        log("iteration " + std::to_string(state.iteration) + ": evaluation");
        evaluate_checkpoint(cfg, state, runner);
      }
      state.phase = EmPhase::Ready;
      save_state(state, sp);
    }
  }
  return state;
}

}  // namespace realflow::em
