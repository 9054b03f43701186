#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "realflow/core.hpp"
#include "support/fixtures.hpp"

using namespace realflow;

TEST_CASE("bilinear kernel values") {
  CHECK(bilinear_kernel({0.0, 0.0}) == 1.0);
  CHECK(bilinear_kernel({0.5, 0.5}) == 0.25);
  CHECK(bilinear_kernel({1.0, 0.3}) == 0.0);
  CHECK(bilinear_kernel({-2.5, 0.0}) == 0.0);
}

TEST_CASE("bilinear kernel is sign-symmetric and a partition of unity") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> d(-3.0, 3.0);
  for (int i = 0; i < 1000; ++i) {
    const double x = d(rng), y = d(rng);
    CHECK(bilinear_kernel({x, y}) == bilinear_kernel({-x, -y}));

    // weights to the four integer neighbors of (x, y) sum to one
    const double fx = std::floor(x), fy = std::floor(y);
    double sum = 0.0;
    for (double ny : {fy, fy + 1.0}) {
      for (double nx : {fx, fx + 1.0}) sum += bilinear_kernel({nx - x, ny - y});
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("sample_bilinear interpolates and clamps") {
  const ImageBuffer img(2, 2, 1, {0.0f, 1.0f, 0.5f, 0.25f});
  CHECK(sample_bilinear(img, 1, 0)[0] == 1.0f);
  CHECK(sample_bilinear(img, 0, 1)[0] == 0.5f);
  CHECK(sample_bilinear(img, 0.5, 0)[0] == 0.5f);
  CHECK(sample_bilinear(img, -5, 0)[0] == 0.0f);
  CHECK(sample_bilinear(img, 7, 9)[0] == 0.25f);

  const ImageBuffer rgb(2, 1, 3, {0.0f, 0.2f, 0.4f, 1.0f, 0.6f, 0.0f});
  const auto mid = sample_bilinear(rgb, 0.5, 0.0);
  REQUIRE(mid.size() == 3);
  CHECK(mid[0] == doctest::Approx(0.5));
  CHECK(mid[1] == doctest::Approx(0.4));
  CHECK(mid[2] == doctest::Approx(0.2));
}

TEST_CASE("constructors reject bad shapes and non-finite data") {
  const float nan = std::numeric_limits<float>::quiet_NaN();
  const float inf = std::numeric_limits<float>::infinity();
  CHECK_THROWS_AS(ImageBuffer(2, 2, 1, {0.0f, 0.0f, 0.0f}), Error);
  CHECK_THROWS_AS(ImageBuffer(1, 1, 2, {0.0f, 0.0f}), Error);
  CHECK_THROWS_AS(ImageBuffer(1, 1, 1, {nan}), Error);
  CHECK_THROWS_AS(FlowField(1, 1, {0.0f, inf}), Error);
  CHECK_THROWS_AS(FlowField(0, 1, {}), Error);
  CHECK_THROWS_AS(DepthMap(1, 1, {nan}), Error);
  CHECK_THROWS_AS(CoverageMask(1, 2, {0.5f, 1.5f}), Error);
  CHECK_THROWS_AS(CoverageMask(1, 1, {-0.1f}), Error);
  CHECK_THROWS_AS(DisturbanceFactor(std::nan("")), Error);

  try {
    FlowField(2, 2, {0.0f});
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DimensionMismatch);
  }
}

TEST_CASE("flow scaling is componentwise") {
  const FlowField f(1, 1, {4.0f, -2.0f});
  const FlowField half = f.scaled(0.5);
  CHECK(half.u(0, 0) == 2.0f);
  CHECK(half.v(0, 0) == -1.0f);
  CHECK(f.scaled(0.0) == FlowField::zeros(1, 1));
}

TEST_CASE("mode names round-trip") {
  for (auto m : {SplatMode::Sum, SplatMode::Softmax, SplatMode::Max}) CHECK(parse_splat_mode(to_string(m)) == m);
  for (auto m : {HoleFillMode::None, HoleFillMode::Bhf}) CHECK(parse_hole_fill_mode(to_string(m)) == m);
  CHECK_THROWS_AS(parse_splat_mode("average"), Error);
}
