#include "support/fixtures.hpp"

#include <stdlib.h>
#include <sys/stat.h>
#include <sys/wait.h>

#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "realflow/io.hpp"

namespace fixtures {

TempDir::TempDir() {
  std::string tmpl = (fs::temp_directory_path() / "realflow-test-XXXXXX").string();
  if (!mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
  path_ = tmpl;
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

realflow::ImageBuffer random_image(std::mt19937_64& rng, int w, int h, int channels) {
  std::uniform_real_distribution<float> dist(0.0f, 1.0f);
  std::vector<float> data(static_cast<std::size_t>(w * h * channels));
  for (auto& v : data) v = dist(rng);
  return realflow::ImageBuffer(w, h, channels, std::move(data));
}

realflow::FlowField random_flow(std::mt19937_64& rng, int w, int h, float limit) {
  std::uniform_real_distribution<float> dist(-limit, limit);
  std::vector<float> data(static_cast<std::size_t>(w * h * 2));
  for (auto& v : data) v = dist(rng);
  return realflow::FlowField(w, h, std::move(data));
}

realflow::DepthMap random_tied_depth(std::mt19937_64& rng, int w, int h, int levels) {
  std::uniform_int_distribution<int> dist(0, levels - 1);
  std::vector<float> data(static_cast<std::size_t>(w * h));
  for (auto& v : data) v = static_cast<float>(dist(rng));
  return realflow::DepthMap(w, h, std::move(data));
}

realflow::DepthMap random_depth(std::mt19937_64& rng, int w, int h, float lo, float hi) {
  std::uniform_real_distribution<float> dist(lo, hi);
  std::vector<float> data(static_cast<std::size_t>(w * h));
  for (auto& v : data) v = dist(rng);
  return realflow::DepthMap(w, h, std::move(data));
}

namespace {

bool in_square(int x, int y, int x0) {
  return x >= x0 && x < x0 + SquareScene::kSquare && y >= SquareScene::kY0 &&
         y < SquareScene::kY0 + SquareScene::kSquare;
}

}  // namespace

realflow::ImageBuffer square_frame(int offset) {
  const int n = SquareScene::kSize;
  std::vector<float> data(static_cast<std::size_t>(n * n));
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      data[static_cast<std::size_t>(y * n + x)] =
          in_square(x, y, SquareScene::kX0 + offset) ? SquareScene::kForeground : SquareScene::kBackground;
    }
  }
  return realflow::ImageBuffer(n, n, 1, std::move(data));
}

realflow::FlowField square_flow(int square_x0, float u) {
  const int n = SquareScene::kSize;
  std::vector<float> data(static_cast<std::size_t>(n * n * 2), 0.0f);
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      if (in_square(x, y, square_x0)) data[static_cast<std::size_t>((y * n + x) * 2)] = u;
    }
  }
  return realflow::FlowField(n, n, std::move(data));
}

realflow::DepthMap square_depth(int square_x0) {
  const int n = SquareScene::kSize;
  std::vector<float> data(static_cast<std::size_t>(n * n));
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      data[static_cast<std::size_t>(y * n + x)] = in_square(x, y, square_x0) ? SquareScene::kForegroundDepth : 0.0f;
    }
  }
  return realflow::DepthMap(n, n, std::move(data));
}

SquareScene make_square_scene(int shift) {
  SquareScene s;
  s.shift = shift;
  s.image1 = square_frame(0);
  s.image2 = square_frame(shift);
  s.flow_fwd = square_flow(SquareScene::kX0, static_cast<float>(shift));
  s.flow_bwd = square_flow(SquareScene::kX0 + shift, static_cast<float>(-shift));
  s.depth1 = square_depth(SquareScene::kX0);
  s.depth2 = square_depth(SquareScene::kX0 + shift);
  return s;
}

void write_script(const fs::path& path, const std::string& body) {
  {
    std::ofstream out(path);
    out << "#!/bin/sh\n" << body << '\n';
  }
  fs::permissions(path, fs::perms::owner_all | fs::perms::group_read | fs::perms::group_exec,
                  fs::perm_options::replace);
}

}  // namespace fixtures

namespace fixtures {

CommandResult run_command(const std::string& command_line) {
  CommandResult r;
  FILE* pipe = popen((command_line + " 2>&1").c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  std::size_t n = 0;
  while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) r.output.append(buf, n);
  const int status = pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
  return r;
}

fs::path write_stub_corpus(const fs::path& dir, int pairs, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const fs::path root = dir / "corpus";
  fs::create_directories(root / "v0");
  std::ofstream listing(root / "pairs.txt");
  listing << "# img1\timg2\tvideo\tframe\n";
  for (int i = 0; i < pairs; ++i) {
    const std::string a = "v0/f" + std::to_string(2 * i) + "a.png";
    const std::string b = "v0/f" + std::to_string(2 * i) + "b.png";
    realflow::io::write_image(random_image(rng, 32, 12, 3), root / a);
    realflow::io::write_image(random_image(rng, 32, 12, 3), root / b);
    listing << a << '\t' << b << "\tv0\t" << 2 * i << '\n';
  }
  return root / "pairs.txt";
}

realflow::em::EmConfig stub_em_config(const fs::path& dir, const fs::path& corpus, const std::string& stub,
                                      int iterations) {
  using realflow::em::shell_quote;
  const std::string log = shell_quote((dir / "calls.log").string());
  realflow::em::EmConfig cfg;
  cfg.corpus_root = corpus;
  cfg.iterations = iterations;
  cfg.estimator_cmd = shell_quote(stub) + " flow {img1} {img2} {out_flow} --u 1 --ckpt {ckpt} --log " + log;
  cfg.depth_cmd = shell_quote(stub) + " depth {img} {out_pfm}";
  cfg.trainer_cmd = shell_quote(stub) + " train {manifest} {init_ckpt} {out_ckpt} --log " + log;
  cfg.eval_cmd = shell_quote(stub) + " eval {ckpt} {out_metrics}";
  cfg.workdir = dir / "work";
  cfg.init_checkpoint = (dir / "init.ckpt").string();
  std::ofstream(cfg.init_checkpoint) << "init\n";
  return cfg;
}

}  // namespace fixtures
