#include <doctest.h>

#include <cmath>
#include <numbers>

#include "dsk/metrics.hpp"
#include "support.hpp"

using namespace dsk;
using dsk::testing::random_values;

namespace {

std::vector<double> gaussian(std::size_t n, double mean, double sd, Rng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = mean + sd * rng.normal();
  return v;
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("energy spectrum of a single mode") {
    std::vector<double> u(32);
    for (std::size_t i = 0; i < u.size(); ++i) u[i] = std::sin(2 * std::numbers::pi * i / 32.0);
    const auto e = metrics::energy_spectrum(u);
    REQUIRE(e.size() == 17);
    // |u_hat(+-1)| = n/2, both bins folded into k = 1.
    CHECK(e[1] == doctest::Approx(2.0 * 16.0 * 16.0));
    for (std::size_t k = 0; k < e.size(); ++k) {
      if (k != 1) CHECK(e[k] < 1e-20 * e[1]);
    }
  }

  TEST_CASE("energy spectrum Parseval identity and zero field") {
    Rng rng(1);
    const auto u = random_values(48, rng);
    const auto e = metrics::energy_spectrum(u);
    double se = 0.0, su = 0.0;
    for (double v : e) se += v;
    for (double v : u) su += v * v;
    CHECK(se == doctest::Approx(su * 48.0).epsilon(1e-10));
    for (double v : metrics::energy_spectrum(std::vector<double>(16, 0.0))) CHECK(v == 0.0);
  }

  TEST_CASE("MELR: zero on identical spectra, log ratio for uniform scaling") {
    const std::vector<double> e = {1.0, 4.0, 2.0, 0.5};
    CHECK(metrics::melr(e, e, false).value == 0.0);
    std::vector<double> scaled = e;
    for (double& v : scaled) v *= std::exp(0.3);
    CHECK(metrics::melr(scaled, e, false).value == doctest::Approx(0.3));
    CHECK(metrics::melr(scaled, e, true).value == doctest::Approx(0.3));
  }

  TEST_CASE("MELR weights and excluded modes") {
    const std::vector<double> ref = {0.0, 3.0, 1.0};
    const std::vector<double> pred = {5.0, 3.0 * std::exp(1.0), 1.0};
    const auto u = metrics::melr(pred, ref, false);
    CHECK(u.excluded == 1);
    CHECK(u.value == doctest::Approx(0.5));
    CHECK(metrics::melr(pred, ref, true).value == doctest::Approx(0.75));
  }

  TEST_CASE("covariance RMSE") {
    Rng rng(2);
    const auto a = random_values(500 * 3, rng);
    CHECK(metrics::cov_rmse(a, a, 3) == 0.0);
    std::vector<double> b = a;
    for (double& v : b) v *= 2.0;
    // Cov_b = 4 Cov_a: |4C - C| / |4C| = 3/4.
    CHECK(metrics::cov_rmse(b, a, 3) == doctest::Approx(0.75));
  }

  TEST_CASE("KDE KL divergence") {
    Rng rng(3);
    const auto a = gaussian(2000, 0.0, 1.0, rng);
    CHECK(std::abs(metrics::kde_kld(a, a, 1)) < 1e-12);
    const auto p = gaussian(10000, 0.0, 1.0, rng);
    const auto r = gaussian(10000, 1.0, 1.0, rng);
    CHECK(metrics::kde_kld(p, r, 1) == doctest::Approx(0.5).epsilon(0.2));
  }

  TEST_CASE("MMD") {
    Rng rng(4);
    const auto a = random_values(200 * 24, rng);
    const auto bw = metrics::median_bandwidths(a, a, 24);
    REQUIRE(bw.size() == 4);
    const double self = metrics::mmd(a, a, 24, bw);
    CHECK(self < 1e-8);
    CHECK(std::abs(self) < 2.0 / 200.0);

    const auto p = random_values(1000 * 24, rng);
    std::vector<double> q = random_values(1000 * 24, rng);
    for (double& v : q) v += 3.0;
    const auto bw2 = metrics::median_bandwidths(p, q, 24);
    const double m = metrics::mmd(p, q, 24, bw2);
    CHECK(m > 0.1);
    CHECK(metrics::mmd(q, p, 24, bw2) == m);
  }

  TEST_CASE("Wasserstein-1") {
    Rng rng(5);
    const auto a = gaussian(1000, 0.0, 1.0, rng);
    CHECK(metrics::wass1(a, a, 1) == 0.0);
    const std::vector<double> zeros(100, 0.0), ones(100, 1.0);
    CHECK(metrics::wass1(zeros, ones, 1) == doctest::Approx(1.0));
    const auto p = gaussian(10000, 0.0, 1.0, rng);
    const auto r = gaussian(10000, 2.0, 1.0, rng);
    CHECK(metrics::wass1(p, r, 1) == doctest::Approx(2.0).epsilon(0.05));
  }

  TEST_CASE("variability of grouped samples") {
    // Two conditions, two samples each, deviations of +-1 everywhere.
    const std::vector<double> s = {1, 1, -1, -1, 5, 5, 3, 3};
    CHECK(metrics::variability(s, 2, 2) == doctest::Approx(1.0));
    CHECK(metrics::variability(s, 2, 1) == 0.0);
    CHECK_THROWS(metrics::variability(s, 2, 3));
  }

  TEST_CASE("sMAPE") {
    CHECK(metrics::smape(std::vector<double>{1.0, 0.0}, std::vector<double>{1.0, 0.0}) == 0.0);
    CHECK(metrics::smape(std::vector<double>{1.0}, std::vector<double>{3.0}) == doctest::Approx(1.0));
  }

  TEST_CASE("constraint RMSE") {
    const auto mask = ks::SelectionMask::make(4, 2);
    const std::vector<double> x = {3.0, 9.0, 4.0, 9.0};
    CHECK(metrics::constraint_rmse(x, mask, std::vector<double>{3.0, 4.0}) == 0.0);
    CHECK(metrics::constraint_rmse(x, mask, std::vector<double>{3.0, 3.0}) == doctest::Approx(1.0 / 5.0));
  }
}
