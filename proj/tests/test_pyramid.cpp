#include <cmath>
#include <vector>

#include "doctest.h"
#include "mgcd/pyramid.hpp"

using namespace mgcd;

namespace {

Tensor random_image(int n, int c, int side, Rng& rng) {
  Tensor t(n, c, side, side);
  for (float& v : t.data) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  return t;
}

}  // namespace

TEST_CASE("downscale: constant image stays constant") {
  const Tensor y(2, 3, 8, 8, 0.37f);
  const auto out = downscale(y, 2);
  CHECK(out.h == 4);
  for (float v : out.data) CHECK(v == doctest::Approx(0.37f));
}

TEST_CASE("downscale: 2x2 block average") {
  Tensor y(1, 1, 2, 2);
  y.data = {0, 1, 2, 3};
  const auto out = downscale(y, 2);
  CHECK(out.size() == 1);
  CHECK(out.data[0] == doctest::Approx(1.5f));
}

TEST_CASE("downscale: 64 to 16 to 4 to 1 under d = 4") {
  Rng rng(1);
  Tensor y = random_image(1, 3, 64, rng);
  const auto a = downscale(y, 4);
  const auto b = downscale(a, 4);
  const auto c = downscale(b, 4);
  CHECK(a.h == 16);
  CHECK(b.h == 4);
  CHECK(c.h == 1);
}

TEST_CASE("downscale: non-divisible size rejected, d < 2 rejected") {
  CHECK_THROWS_AS(downscale(Tensor(1, 1, 6, 6, 0.0f), 4), ShapeError);
  CHECK_THROWS_AS(downscale(Tensor(1, 1, 4, 4, 0.0f), 1), ShapeError);
}

TEST_CASE("upscale: replicates a 1x1 value into the block") {
  Tensor y(1, 2, 1, 1);
  y.data = {0.25f, -0.5f};
  const auto out = upscale(y, 4);
  CHECK(out.h == 4);
  for (int i = 0; i < 16; ++i) {
    CHECK(out.data[i] == 0.25f);
    CHECK(out.data[16 + i] == -0.5f);
  }
}

TEST_CASE("upscale: 2x2 pattern becomes constant blocks") {
  Tensor y(1, 1, 2, 2);
  y.data = {0, 1, 2, 3};
  const auto out = upscale(y, 2);
  REQUIRE(out.h == 4);
  CHECK(out.at(0, 0, 0, 0) == 0);
  CHECK(out.at(0, 0, 0, 1) == 0);
  CHECK(out.at(0, 0, 1, 1) == 0);
  CHECK(out.at(0, 0, 0, 2) == 1);
  CHECK(out.at(0, 0, 3, 0) == 2);
  CHECK(out.at(0, 0, 2, 3) == 3);
}

TEST_CASE("projection identity: downscale of upscale is exact") {
  Rng rng(2);
  for (int d : {2, 3, 4}) {
    const Tensor y = random_image(2, 3, 8 * (d == 3 ? 3 : 2) / 2, rng);
    const auto round = downscale(upscale(y, d), d);
    REQUIRE(round.same_shape(y));
    for (size_t i = 0; i < y.size(); ++i) CHECK(std::abs(round.data[i] - y.data[i]) < 1e-6);
  }
}

TEST_CASE("idempotent projection: downscale-upscale-downscale equals downscale") {
  Rng rng(3);
  const Tensor y = random_image(1, 1, 16, rng);
  const auto down = downscale(y, 4);
  const auto again = downscale(upscale(down, 4), 4);
  for (size_t i = 0; i < down.size(); ++i) CHECK(std::abs(again.data[i] - down.data[i]) < 1e-6);
}

TEST_CASE("mean preservation across pyramid levels") {
  Rng rng(4);
  const Tensor y = random_image(2, 3, 64, rng);
  const auto pyr = build_pyramid(y, 4, 3);
  for (int ch = 0; ch < 3; ++ch) {
    std::vector<double> means;
    for (const auto& level : pyr.levels) {
      double s = 0;
      long cnt = 0;
      for (int nn = 0; nn < level.n; ++nn)
        for (int i = 0; i < level.h * level.w; ++i) {
          s += level.data[level.idx(nn, ch, 0, 0) + i];
          ++cnt;
        }
      means.push_back(s / cnt);
    }
    for (size_t s = 1; s < means.size(); ++s)
      CHECK(means[s] == doctest::Approx(means[0]).epsilon(1e-5));
  }
}

TEST_CASE("build_pyramid: paper shape 64x64, d=4, S=3") {
  Rng rng(5);
  const Tensor y = random_image(3, 1, 64, rng);
  const auto pyr = build_pyramid(y, 4, 3);
  REQUIRE(pyr.levels.size() == 4);
  CHECK(pyr.levels[0].h == 1);
  CHECK(pyr.levels[1].h == 4);
  CHECK(pyr.levels[2].h == 16);
  CHECK(pyr.levels[3].h == 64);
  CHECK(pyr.factor(1) == 4);
  CHECK(pyr.factor(3) == 4);
}

TEST_CASE("build_pyramid: constant input gives constant levels") {
  const Tensor y(1, 2, 16, 16, 0.125f);
  const auto pyr = build_pyramid(y, 4, 2);
  for (const auto& level : pyr.levels)
    for (float v : level.data) CHECK(v == doctest::Approx(0.125f));
}

TEST_CASE("build_pyramid: levels satisfy the downscale consistency invariant") {
  Rng rng(6);
  const Tensor y = random_image(2, 3, 16, rng);
  const auto pyr = build_pyramid(y, 2, 4);
  REQUIRE(pyr.levels.size() == 5);
  for (int s = 1; s <= 4; ++s) {
    const auto re = downscale(pyr.levels[s], 2);
    for (size_t i = 0; i < re.size(); ++i)
      CHECK(std::abs(re.data[i] - pyr.levels[s - 1].data[i]) < 1e-6);
  }
}

TEST_CASE("build_pyramid: degenerate 1x1 input yields identical levels") {
  Tensor y(2, 1, 1, 1);
  y.data = {0.5f, -0.25f};
  const auto pyr = build_pyramid(y, 4, 1);
  REQUIRE(pyr.levels.size() == 2);
  CHECK(pyr.levels[0].data == y.data);
  CHECK(pyr.levels[1].data == y.data);
  CHECK(pyr.factor(1) == 1);
}

TEST_CASE("build_pyramid: side not a power of d rejected") {
  CHECK_THROWS_AS(build_pyramid(Tensor(1, 1, 24, 24, 0.0f), 4, 3), ShapeError);
  CHECK_THROWS_AS(build_pyramid(Tensor(1, 1, 16, 16, 0.0f), 4, 1), ShapeError);
  CHECK_THROWS_AS(build_pyramid(Tensor(1, 1, 16, 8, 0.0f), 4, 2), ShapeError);
}

TEST_CASE("grid_side helper matches pyramid level sides") {
  CHECK(grid_side(64, 4, 3, 0) == 1);
  CHECK(grid_side(64, 4, 3, 1) == 4);
  CHECK(grid_side(64, 4, 3, 2) == 16);
  CHECK(grid_side(64, 4, 3, 3) == 64);
  CHECK(grid_side(1, 4, 1, 0) == 1);
  CHECK(grid_side(1, 4, 1, 1) == 1);
}

TEST_CASE("fit_histogram: point mass concentrates in one bin") {
  Tensor g0(500, 1, 1, 1, 0.2f);
  const auto model = fit_histogram(g0, 64);
  double top = 0;
  for (int b = 0; b < 64; ++b) top = std::max(top, model.prob(0, b));
  CHECK(top > 0.85);  // 500 counts + 64 smoothing counts
  double total = 0;
  for (int b = 0; b < 64; ++b) total += model.prob(0, b);
  CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("fit_histogram: uniform data is uniform within 3 standard errors") {
  Rng rng(7);
  const int n = 64000, bins = 64;
  Tensor g0(n, 1, 1, 1);
  for (float& v : g0.data) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  const auto model = fit_histogram(g0, bins);
  const double p = 1.0 / bins;
  const double se = std::sqrt(p * (1 - p) / n);
  for (int b = 0; b < bins; ++b) CHECK(std::abs(model.prob(0, b) - p) < 3 * se);
}

TEST_CASE("fit_histogram: empty input rejected") {
  CHECK_THROWS_AS(fit_histogram(Tensor(0, 1, 1, 1)), ShapeError);
  CHECK_THROWS_AS(fit_histogram(Tensor(4, 1, 2, 2, 0.0f)), ShapeError);
}

TEST_CASE("sample_histogram: point-mass model samples stay in that bin") {
  Tensor g0(2000, 1, 1, 1, 0.33f);
  const auto model = fit_histogram(g0, 64);
  // bin containing 0.33 in [-1,1): width 1/32
  const double width = 2.0 / 64;
  const int bin = static_cast<int>((0.33 + 1.0) / width);
  Rng rng(8);
  const auto samples = sample_histogram(model, 500, rng);
  int inside = 0;
  for (float v : samples.data) {
    if (v >= -1.0 + bin * width && v < -1.0 + (bin + 1) * width) ++inside;
  }
  CHECK(inside > 460);  // bin mass is 2001/2064, smoothing takes the rest
}

TEST_CASE("sample_histogram: empirical frequencies match the model (TV < 0.01)") {
  // concentrated model: most mass in four bins, so the TV budget is easy to
  // meet with 1e5 draws
  Tensor g0(1000, 1, 1, 1);
  for (int i = 0; i < 1000; ++i) g0.data[i] = -0.75f + 0.5f * (i % 4);
  const auto model = fit_histogram(g0, 64);
  Rng rng(9);
  const int n = 100000;
  const auto samples = sample_histogram(model, n, rng);
  std::vector<double> freq(64, 0.0);
  const double scale = 64 / 2.0;
  for (float v : samples.data) {
    int b = static_cast<int>((v + 1.0) * scale);
    b = std::max(0, std::min(63, b));
    freq[b] += 1.0 / n;
  }
  double tv = 0;
  for (int b = 0; b < 64; ++b) tv += std::abs(freq[b] - model.prob(0, b));
  CHECK(tv / 2 < 0.01);
}

TEST_CASE("sample_histogram: deterministic under a fixed seed") {
  Tensor g0(100, 2, 1, 1);
  Rng data_rng(10);
  for (float& v : g0.data) v = static_cast<float>(data_rng.uniform(-1.0, 1.0));
  const auto model = fit_histogram(g0, 32);
  Rng a(11), b(11);
  const auto s1 = sample_histogram(model, 50, a);
  const auto s2 = sample_histogram(model, 50, b);
  CHECK(s1.data == s2.data);
}
