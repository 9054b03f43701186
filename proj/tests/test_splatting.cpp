#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "oracle/naive.hpp"
#include "realflow/splatting.hpp"
#include "support/fixtures.hpp"

using namespace realflow;

namespace {

double max_abs_diff(std::span<const float> a, const std::vector<double>& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(double(a[i]) - b[i]));
  return worst;
}

// Moves every source pixel to the same target (tx, ty).
FlowField collapse_to(int w, int h, int tx, int ty) {
  std::vector<float> data;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      data.push_back(static_cast<float>(tx - x));
      data.push_back(static_cast<float>(ty - y));
    }
  }
  return FlowField(w, h, std::move(data));
}

}  // namespace

TEST_CASE("zero flow reproduces the source in every mode") {
  std::mt19937_64 rng(11);
  const ImageBuffer src = fixtures::random_image(rng, 7, 5, 3);
  const DepthMap depth = fixtures::random_depth(rng, 7, 5, -5, 5);
  const FlowField zero = FlowField::zeros(7, 5);

  const SplatResult sum = splat_sum(src, zero);
  CHECK(sum.image == src);
  CHECK(sum.coverage == CoverageMask::filled(7, 5, 1.0f));

  CHECK(splat_softmax(src, zero, depth).image == src);

  const SplatResult mx = splat_max(src, zero, depth);
  CHECK(mx.image == src);
  REQUIRE(mx.winner_source);
  for (std::size_t p = 0; p < mx.winner_source->size(); ++p) CHECK((*mx.winner_source)[p] == std::int64_t(p));
}

TEST_CASE("sum splatting adds unnormalized contributions") {
  const ImageBuffer src(2, 1, 1, {0.2f, 0.4f});
  const SplatResult r = splat_sum(src, collapse_to(2, 1, 0, 0));
  CHECK(r.image.at(0, 0) == doctest::Approx(0.6).epsilon(1e-7));
  CHECK(r.image.at(1, 0) == 0.0f);
  CHECK(r.coverage.at(0, 0) == 1.0f);
  CHECK(r.coverage.at(1, 0) == 0.0f);
}

TEST_CASE("softmax weights by exp(depth)") {
  const ImageBuffer src(2, 1, 1, {0.0f, 1.0f});
  const DepthMap depth(2, 1, {0.0f, static_cast<float>(std::log(3.0))});
  const SplatResult r = splat_softmax(src, collapse_to(2, 1, 0, 0), depth);
  CHECK(r.image.at(0, 0) == doctest::Approx(0.75).epsilon(1e-6));
  CHECK(r.image.at(1, 0) == 0.0f);
  CHECK(r.coverage.at(1, 0) == 0.0f);
}

TEST_CASE("softmax survives large inverse depths") {
  const ImageBuffer src(2, 1, 1, {0.0f, 1.0f});
  const DepthMap depth(2, 1, {500.0f, 500.0f + static_cast<float>(std::log(3.0))});
  const SplatResult r = splat_softmax(src, collapse_to(2, 1, 0, 0), depth);
  CHECK(r.image.at(0, 0) == doctest::Approx(0.75).epsilon(1e-4));
}

TEST_CASE("max splatting copies the closest candidate") {
  const ImageBuffer src(2, 1, 1, {0.1f, 0.9f});
  const DepthMap depth(2, 1, {5.0f, 2.0f});
  const SplatResult r = splat_max(src, collapse_to(2, 1, 1, 0), depth);
  CHECK(r.image.at(1, 0) == 0.1f);
  CHECK((*r.winner_source)[1] == 0);
  CHECK((*r.winner_source)[0] == kNoSource);

  const DepthMap tied(2, 1, {3.0f, 3.0f});
  const SplatResult t = splat_max(src, collapse_to(2, 1, 1, 0), tied);
  CHECK((*t.winner_source)[1] == 0);  // smallest source index wins ties
}

TEST_CASE("max mode leaves pixels outside the radius empty but keeps bilinear coverage") {
  // lands at (0.6, 0.6): inside (1,1)'s radius, outside (0,0)'s
  const ImageBuffer src = ImageBuffer::filled(2, 2, 1, 0.5f);
  std::vector<float> f(8, 0.0f);
  f[0] = 0.6f;
  f[1] = 0.6f;
  const FlowField flow(2, 2, f);
  const SplatResult r = splat_max(src, flow, DepthMap::filled(2, 2, 0.0f));
  CHECK(r.coverage == coverage_from_flow(flow));
  CHECK((*r.winner_source)[3] == 0);  // tie at depth 0 with source 3 itself -> index 0
  CHECK((*r.winner_source)[0] == kNoSource);
  CHECK(r.image.at(0, 0) == 0.0f);
  CHECK(r.coverage.at(0, 0) > 0.0f);
}

TEST_CASE("out-of-grid landings are dropped") {
  const ImageBuffer src = ImageBuffer::filled(4, 1, 1, 1.0f);
  const SplatResult r = splat_sum(src, FlowField::uniform(4, 1, 1.0f, 0.0f));
  CHECK(r.image.at(0, 0) == 0.0f);
  CHECK(r.coverage.at(0, 0) == 0.0f);
  for (int x = 1; x < 4; ++x) CHECK(r.image.at(x, 0) == 1.0f);

  const SplatResult far = splat_sum(src, FlowField::uniform(4, 1, 1e6f, -1e6f));
  for (float v : far.image.data()) CHECK(v == 0.0f);
}

TEST_CASE("splatting rejects mismatched inputs") {
  const ImageBuffer src = ImageBuffer::filled(3, 3, 1, 0.0f);
  CHECK_THROWS_AS(splat_sum(src, FlowField::zeros(3, 2)), Error);
  CHECK_THROWS_AS(splat_softmax(src, FlowField::zeros(3, 3), DepthMap::filled(2, 3, 0.0f)), Error);
  CHECK_THROWS_AS(splat(SplatMode::Max, src, FlowField::zeros(3, 3), nullptr), Error);
}

TEST_CASE("random instances agree with the literal oracle") {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> size(1, 8);
  std::uniform_int_distribution<int> chans(0, 1);
  for (int trial = 0; trial < 60; ++trial) {
    const int w = size(rng), h = size(rng), c = chans(rng) ? 3 : 1;
    const ImageBuffer src = fixtures::random_image(rng, w, h, c);
    const FlowField flow = fixtures::random_flow(rng, w, h, 3.0f);
    const DepthMap depth = trial % 2 ? fixtures::random_depth(rng, w, h, -5, 5) : fixtures::random_tied_depth(rng, w, h, 2);

    const auto o_sum = oracle::splat(oracle::Mode::Sum, src, flow, nullptr);
    const SplatResult sum = splat_sum(src, flow);
    CHECK(max_abs_diff(sum.image.data(), o_sum.image) <= 1e-5);
    CHECK(max_abs_diff(sum.coverage.data(), o_sum.coverage) <= 1e-6);

    const auto o_soft = oracle::splat(oracle::Mode::Softmax, src, flow, &depth);
    CHECK(max_abs_diff(splat_softmax(src, flow, depth).image.data(), o_soft.image) <= 1e-5);

    const auto o_max = oracle::splat(oracle::Mode::Max, src, flow, &depth);
    const SplatResult mx = splat_max(src, flow, depth);
    CHECK(*mx.winner_source == o_max.winner);
    CHECK(max_abs_diff(mx.image.data(), o_max.image) == 0.0);
  }
}

TEST_CASE("properties: depth shift, convexity, purity, determinism") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 30; ++trial) {
    const int w = 6, h = 5;
    const ImageBuffer src = fixtures::random_image(rng, w, h, 1);
    const FlowField flow = fixtures::random_flow(rng, w, h, 2.5f);
    const DepthMap depth = fixtures::random_depth(rng, w, h, -5, 5);

    std::vector<float> shifted(depth.data().begin(), depth.data().end());
    for (auto& d : shifted) d += 40.0f;
    const SplatResult a = splat_softmax(src, flow, depth);
    const SplatResult b = splat_softmax(src, flow, DepthMap(w, h, shifted));
    for (std::size_t i = 0; i < a.image.data().size(); ++i) {
      CHECK(std::abs(a.image.data()[i] - b.image.data()[i]) <= 1e-6);
    }

    // convexity: covered softmax pixels stay within their contributors' range
    for (int py = 0; py < h; ++py) {
      for (int px = 0; px < w; ++px) {
        if (a.coverage.at(px, py) == 0.0f) continue;
        float lo = 1.0f, hi = 0.0f;
        for (int qy = 0; qy < h; ++qy) {
          for (int qx = 0; qx < w; ++qx) {
            if (bilinear_kernel({px - (qx + double(flow.u(qx, qy))), py - (qy + double(flow.v(qx, qy)))}) > 0) {
              lo = std::min(lo, src.at(qx, qy));
              hi = std::max(hi, src.at(qx, qy));
            }
          }
        }
        CHECK(a.image.at(px, py) >= lo - 1e-6f);
        CHECK(a.image.at(px, py) <= hi + 1e-6f);
      }
    }

    // purity of max mode
    const SplatResult mx = splat_max(src, flow, depth);
    for (int py = 0; py < h; ++py) {
      for (int px = 0; px < w; ++px) {
        const auto q = (*mx.winner_source)[static_cast<std::size_t>(py * w + px)];
        if (q == kNoSource) {
          CHECK(mx.image.at(px, py) == 0.0f);
          continue;
        }
        const int qx = int(q % w), qy = int(q / w);
        CHECK(mx.image.at(px, py) == src.at(qx, qy));
        CHECK(std::hypot(qx + double(flow.u(qx, qy)) - px, qy + double(flow.v(qx, qy)) - py) <= kMaxSplatRadius);
      }
    }

    // determinism across worker counts
    for (unsigned workers : {2u, 3u, 5u}) {
      CHECK(splat_sum(src, flow, {workers}).image == splat_sum(src, flow).image);
      CHECK(splat_softmax(src, flow, depth, {workers}).image == a.image);
      CHECK(splat_max(src, flow, depth, {workers}).winner_source == mx.winner_source);
    }
  }
}

TEST_CASE("integer translation is exact in every mode") {
  std::mt19937_64 rng(5);
  const ImageBuffer src = fixtures::random_image(rng, 8, 6, 3);
  const DepthMap depth = fixtures::random_depth(rng, 8, 6, -5, 5);
  const FlowField flow = FlowField::uniform(8, 6, 2.0f, -1.0f);
  for (SplatMode mode : {SplatMode::Sum, SplatMode::Softmax, SplatMode::Max}) {
    const SplatResult r = splat(mode, src, flow, &depth);
    for (int y = 0; y < 5; ++y) {
      for (int x = 2; x < 8; ++x) {
        for (int c = 0; c < 3; ++c) CHECK(r.image.at(x, y, c) == src.at(x - 2, y + 1, c));
      }
    }
    for (int x = 0; x < 8; ++x) CHECK(r.coverage.at(x, 5) == 0.0f);
  }
}

TEST_CASE("coverage-zero pixels are black") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const ImageBuffer src = fixtures::random_image(rng, 8, 8, 3);
    const FlowField flow = fixtures::random_flow(rng, 8, 8, 3.0f);
    const DepthMap depth = fixtures::random_depth(rng, 8, 8, -5, 5);
    for (SplatMode mode : {SplatMode::Sum, SplatMode::Softmax, SplatMode::Max}) {
      const SplatResult r = splat(mode, src, flow, &depth);
      for (std::size_t p = 0; p < r.coverage.data().size(); ++p) {
        if (r.coverage.data()[p] != 0.0f) continue;
        for (int c = 0; c < 3; ++c) CHECK(r.image.data()[p * 3 + c] == 0.0f);
      }
    }
  }
}
