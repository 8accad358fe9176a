#include <doctest.h>

#include <cmath>
#include <numbers>

#include "dsk/baselines.hpp"
#include "dsk/metrics.hpp"
#include "support.hpp"

using namespace dsk;

TEST_SUITE("baselines") {
  TEST_CASE("cubic upsampling interpolates the coarse nodes") {
    Rng rng(1);
    const auto y = dsk::testing::random_values(24, rng);
    const auto x = baselines::cubic_upsample(y, 8);
    REQUIRE(x.size() == 192);
    for (std::size_t j = 0; j < 24; ++j) CHECK(x[8 * j] == doctest::Approx(y[j]).epsilon(1e-14));
  }

  TEST_CASE("cubic upsampling reproduces constants and smooth waves") {
    const auto c = baselines::cubic_upsample(std::vector<double>(12, 2.5), 4);
    for (double v : c) CHECK(v == doctest::Approx(2.5).epsilon(1e-14));
    std::vector<double> y(24);
    for (std::size_t j = 0; j < 24; ++j) y[j] = std::cos(2 * std::numbers::pi * j / 24.0);
    const auto x = baselines::cubic_upsample(y, 8);
    double worst = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      worst = std::max(worst, std::abs(x[i] - std::cos(2 * std::numbers::pi * i / 192.0)));
    }
    CHECK(worst < 2e-3);
  }

  TEST_CASE("quantile matching maps N(0,1) onto N(2,4)") {
    Rng rng(2);
    const std::size_t n = 20000, dim = 2;
    std::vector<double> src(n * dim), ref(n * dim), test(n * dim), target(n * dim);
    for (double& v : src) v = rng.normal();
    for (double& v : ref) v = 2.0 + 2.0 * rng.normal();
    for (double& v : test) v = rng.normal();
    for (double& v : target) v = 2.0 + 2.0 * rng.normal();
    const auto qt = baselines::fit_quantile_table(src, ref, dim, 1000);
    std::size_t clamped = 0;
    std::vector<double> mapped;
    for (std::size_t i = 0; i < n; ++i) {
      const auto row = baselines::quantile_match(std::span(test).subspan(i * dim, dim), qt, &clamped);
      mapped.insert(mapped.end(), row.begin(), row.end());
    }
    CHECK(metrics::wass1(mapped, target, dim) < 0.05);
    CHECK(clamped < n * dim / 500);
    // Monotone per pixel.
    CHECK(baselines::quantile_match(std::vector<double>{-0.5, -0.5}, qt)[0] <
          baselines::quantile_match(std::vector<double>{0.5, 0.5}, qt)[0]);
  }

  TEST_CASE("values outside the source range are clamped to the end segments") {
    const std::vector<double> src = {0.0, 1.0, 2.0, 3.0};
    const std::vector<double> ref = {10.0, 11.0, 12.0, 13.0};
    const auto qt = baselines::fit_quantile_table(src, ref, 1, 4);
    std::size_t clamped = 0;
    const auto lo = baselines::quantile_match(std::vector<double>{-5.0}, qt, &clamped);
    const auto hi = baselines::quantile_match(std::vector<double>{50.0}, qt, &clamped);
    CHECK(clamped == 2);
    const auto r = qt.reference_row(0);
    CHECK(lo[0] == doctest::Approx(0.5 * (r[0] + r[1])));
    CHECK(hi[0] == doctest::Approx(0.5 * (r[3] + r[4])));
  }

  TEST_CASE("quantile table round trip") {
    Rng rng(3);
    const auto src = dsk::testing::random_values(300, rng), ref = dsk::testing::random_values(300, rng);
    const auto qt = baselines::fit_quantile_table(src, ref, 3, 10);
    const auto back = baselines::decode_quantile_table(baselines::encode_quantile_table(qt));
    CHECK(back.levels == 10);
    CHECK(back.dim == 3);
    CHECK(back.source == qt.source);
    CHECK(back.reference == qt.reference);
  }
}
