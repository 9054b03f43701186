#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "realflow/manifest.hpp"
#include "realflow/ripr.hpp"

namespace realflow::em {

namespace fs = std::filesystem;

// Runs one shell command line and returns its exit status.
class CommandRunner {
 public:
  virtual ~CommandRunner() = default;
  virtual int run(const std::string& command_line) = 0;
};

// /bin/sh -c via posix_spawn; safe to call from several threads.
class ShellRunner : public CommandRunner {
 public:
  int run(const std::string& command_line) override;
};

// Forwards to another runner and counts invocations.
class CountingRunner : public CommandRunner {
 public:
  explicit CountingRunner(CommandRunner& inner) : inner_(inner) {}
  int run(const std::string& command_line) override {
    ++count_;
    return inner_.run(command_line);
  }
  std::size_t count() const { return count_.load(); }

 private:
  CommandRunner& inner_;
  std::atomic<std::size_t> count_{0};
};

std::string shell_quote(const std::string& text);

// Replaces {name} with the shell-quoted value; unknown placeholders are left as-is.
std::string expand_template(const std::string& tmpl, const std::map<std::string, std::string>& values);

struct EmConfig {
  fs::path corpus_root;  // corpus listing file
  int iterations = 4;
  // {img1} {img2} {out_flow}; optional {ckpt} receives the current checkpoint
  std::string estimator_cmd;
  std::string depth_cmd;    // {img} {out_pfm}
  std::string trainer_cmd;  // {manifest} {init_ckpt} {out_ckpt}
  std::optional<std::string> eval_cmd;  // {ckpt} {out_metrics}
  fs::path workdir;
  std::string init_checkpoint;
  unsigned workers = 1;
  bool keep_rejected = false;
  RiprConfig ripr;

  void validate() const;
};

// Relative paths in the file resolve against base_dir.
EmConfig em_config_from_json(const nlohmann::json& j, const fs::path& base_dir);

struct CorpusEntry {
  fs::path image1;
  fs::path image2;
  std::string video_id;
  std::int64_t frame_index = 0;
};

// "img1<TAB>img2<TAB>video_id<TAB>frame_index" per line; blank lines and '#'
// comments are skipped; relative image paths resolve against the listing's directory.
std::vector<CorpusEntry> read_corpus(const fs::path& listing);

struct MetricEntry {
  std::int64_t iteration = 0;
  std::string name;
  double value = 0.0;
  friend bool operator==(const MetricEntry&, const MetricEntry&) = default;
};

enum class EmPhase {
  Ready,      // iteration `iteration` fully done; next E-step pending
  Generated,  // E-step of iteration + 1 done; M-step pending
  Trained,    // iteration `iteration` trained; evaluation pending
};

struct EmState {
  std::int64_t iteration = 0;
  std::string checkpoint_path;
  std::string manifest_path;
  std::vector<MetricEntry> metrics_history;
  EmPhase phase = EmPhase::Ready;

  friend bool operator==(const EmState&, const EmState&) = default;
};

nlohmann::json to_json(const EmState& state);
EmState state_from_json(const nlohmann::json& j);
fs::path state_path(const EmConfig& cfg);
void save_state(const EmState& state, const fs::path& path);
std::optional<EmState> load_state(const fs::path& path);

fs::path iteration_dir(const EmConfig& cfg, std::int64_t iteration);

struct EStepOptions {
  std::ostream* log = nullptr;  // one line per pair when set
};

// Generates the dataset of iteration state.iteration + 1 from state.checkpoint_path
// and writes <workdir>/iter<t>/manifest.json. Per-pair failures land in
// manifest.failures. Throws CorpusEmpty.
DatasetManifest e_step(const EmConfig& cfg, const EmState& state, CommandRunner& runner,
                       const EStepOptions& options = {});

// Same pipeline driven directly by a corpus and an output directory.
DatasetManifest generate_dataset(const std::vector<CorpusEntry>& corpus, const EmConfig& cfg,
                                 std::int64_t iteration, const std::string& checkpoint,
                                 const fs::path& out_dir, CommandRunner& runner,
                                 const EStepOptions& options = {});

// Trains on state.manifest_path starting from state.checkpoint_path. Returns the
// advanced state; throws TrainerFailed and leaves `state` untouched on failure.
EmState m_step(const EmConfig& cfg, const DatasetManifest& manifest, const EmState& state,
               CommandRunner& runner);

struct RunOptions {
  std::ostream* log = nullptr;
};

// Alternates E/M steps until cfg.iterations are done, persisting state after
// every step so an interrupted run resumes where it stopped.
EmState run(const EmConfig& cfg, CommandRunner& runner, const RunOptions& options = {});

}  // namespace realflow::em
