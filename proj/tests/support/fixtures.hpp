#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "realflow/core.hpp"
#include "realflow/em.hpp"

namespace fixtures {

namespace fs = std::filesystem;

// mkdtemp-backed directory removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

realflow::ImageBuffer random_image(std::mt19937_64& rng, int w, int h, int channels);
realflow::FlowField random_flow(std::mt19937_64& rng, int w, int h, float limit);
// Integer-valued depths from a small pool, so ties are common.
realflow::DepthMap random_tied_depth(std::mt19937_64& rng, int w, int h, int levels);
realflow::DepthMap random_depth(std::mt19937_64& rng, int w, int h, float lo, float hi);

// 20x20 scene: background 0.25 at inverse depth 0, a 6x6 square of 0.75 at
// inverse depth 20 whose top-left corner sits at (4, 7) in frame 1 and moves
// `shift` pixels right in frame 2.
struct SquareScene {
  static constexpr int kSize = 20;
  static constexpr int kSquare = 6;
  static constexpr int kX0 = 4;
  static constexpr int kY0 = 7;
  static constexpr float kBackground = 0.25f;
  static constexpr float kForeground = 0.75f;
  static constexpr float kForegroundDepth = 20.0f;

  int shift = 3;
  realflow::ImageBuffer image1, image2;
  realflow::FlowField flow_fwd, flow_bwd;
  realflow::DepthMap depth1, depth2;
};

SquareScene make_square_scene(int shift = 3);
// Analytic frame with the square's left edge at kX0 + offset.
realflow::ImageBuffer square_frame(int offset);
// Ground-truth forward flow: (offset, 0) on the frame-1 square, zero elsewhere.
realflow::FlowField square_flow(int square_x0, float u);
realflow::DepthMap square_depth(int square_x0);

// Writes an executable /bin/sh script.
void write_script(const fs::path& path, const std::string& body);

struct CommandResult {
  int exit_code = -1;
  std::string output;  // stdout and stderr interleaved
};
CommandResult run_command(const std::string& command_line);

// Writes `pairs` random 32x12 RGB frame pairs plus a TAB-separated listing
// under dir/corpus; returns the listing path.
fs::path write_stub_corpus(const fs::path& dir, int pairs, std::uint64_t seed = 1);

// EM config wired to the stub executable. The estimator shifts by one pixel
// and appends the checkpoint it was given to dir/calls.log.
realflow::em::EmConfig stub_em_config(const fs::path& dir, const fs::path& corpus, const std::string& stub,
                                      int iterations = 2);

}  // namespace fixtures
