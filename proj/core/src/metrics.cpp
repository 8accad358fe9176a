#include "dsk/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

#include "dsk/fft.hpp"

namespace dsk::metrics {
namespace {

std::size_t count(std::span<const double> s, std::size_t dim, const char* what) {
  if (dim == 0 || s.size() % dim != 0) {
    throw std::invalid_argument(std::string(what) + ": sample array is not a multiple of dimension " +
                                std::to_string(dim));
  }
  return s.size() / dim;
}

void require(std::size_t n, std::size_t min, const char* what) {
  if (n < min) {
    throw std::invalid_argument(std::string(what) + ": need at least " + std::to_string(min) + " samples, got " +
                                std::to_string(n));
  }
}

std::vector<double> column(std::span<const double> s, std::size_t dim, std::size_t m) {
  const std::size_t n = s.size() / dim;
  std::vector<double> c(n);
  for (std::size_t i = 0; i < n; ++i) c[i] = s[i * dim + m];
  return c;
}

double stddev(const std::vector<double>& v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

// log of a Gaussian KDE at each grid point.
std::vector<double> log_kde(const std::vector<double>& data, double h, const std::vector<double>& grid) {
  std::vector<double> out(grid.size());
  const double norm = std::log(static_cast<double>(data.size()) * h * std::sqrt(2.0 * std::numbers::pi));
  const double inv = 1.0 / (2.0 * h * h);
  std::vector<double> a(data.size());
  for (std::size_t g = 0; g < grid.size(); ++g) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double d = grid[g] - data[i];
      a[i] = -d * d * inv;
      mx = std::max(mx, a[i]);
    }
    double s = 0.0;
    for (double v : a) s += std::exp(v - mx);
    out[g] = mx + std::log(s) - norm;
  }
  return out;
}

double sq_dist(const double* a, const double* b, std::size_t d) {
  double s = 0.0;
  for (std::size_t k = 0; k < d; ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return s;
}

}  // namespace

std::vector<double> energy_spectrum(std::span<const double> u) {
  const std::size_t n = u.size();
  if (n < 2) throw std::invalid_argument("energy_spectrum: need at least 2 points");
  RealFft fft(n);
  std::vector<std::complex<double>> hat(fft.modes());
  fft.forward(u, hat);
  std::vector<double> e(hat.size());
  for (std::size_t k = 0; k < hat.size(); ++k) {
    const double mag = std::norm(hat[k]);
    const bool self_conjugate = k == 0 || 2 * k == n;
    e[k] = self_conjugate ? mag : 2.0 * mag;
  }
  return e;
}

std::vector<double> mean_energy_spectrum(std::span<const double> samples, std::size_t dim) {
  const std::size_t n = count(samples, dim, "mean_energy_spectrum");
  require(n, 1, "mean_energy_spectrum");
  std::vector<double> acc(dim / 2 + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto e = energy_spectrum(samples.subspan(i * dim, dim));
    for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += e[k];
  }
  for (double& v : acc) v /= static_cast<double>(n);
  return acc;
}

MelrResult melr(std::span<const double> e_pred, std::span<const double> e_ref, bool weighted) {
  if (e_pred.size() != e_ref.size()) throw std::invalid_argument("melr: spectra have different lengths");
  double total = 0.0;
  for (double v : e_ref) total += v;
  MelrResult r;
  r.log_ratio.assign(e_ref.size(), 0.0);
  std::vector<char> used(e_ref.size(), 0);
  std::size_t card = 0;
  double used_energy = 0.0;
  for (std::size_t k = 0; k < e_ref.size(); ++k) {
    if (!(e_ref[k] > 1e-20 * total)) {
      ++r.excluded;
      continue;
    }
    used[k] = 1;
    ++card;
    used_energy += e_ref[k];
    r.log_ratio[k] = std::log(e_pred[k] / e_ref[k]);
  }
  if (card == 0) throw std::invalid_argument("melr: reference spectrum has no energy");
  for (std::size_t k = 0; k < e_ref.size(); ++k) {
    if (!used[k]) continue;
    const double w = weighted ? e_ref[k] / used_energy : 1.0 / static_cast<double>(card);
    r.value += w * std::abs(r.log_ratio[k]);
  }
  return r;
}

std::vector<double> covariance(std::span<const double> samples, std::size_t dim) {
  const std::size_t n = count(samples, dim, "covariance");
  require(n, 2, "covariance");
  std::vector<double> mean(dim, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t a = 0; a < dim; ++a) mean[a] += samples[i * dim + a];
  }
  for (double& v : mean) v /= static_cast<double>(n);
  std::vector<double> cov(dim * dim, 0.0);
  std::vector<double> c(dim);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t a = 0; a < dim; ++a) c[a] = samples[i * dim + a] - mean[a];
    for (std::size_t a = 0; a < dim; ++a) {
      for (std::size_t b = a; b < dim; ++b) cov[a * dim + b] += c[a] * c[b];
    }
  }
  for (std::size_t a = 0; a < dim; ++a) {
    for (std::size_t b = a; b < dim; ++b) {
      cov[a * dim + b] /= static_cast<double>(n);
      cov[b * dim + a] = cov[a * dim + b];
    }
  }
  return cov;
}

double cov_rmse(std::span<const double> pred, std::span<const double> ref, std::size_t dim) {
  const auto cp = covariance(pred, dim);
  const auto cr = covariance(ref, dim);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < cp.size(); ++i) {
    num += (cp[i] - cr[i]) * (cp[i] - cr[i]);
    den += cp[i] * cp[i];
  }
  if (den == 0.0) return num == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return std::sqrt(num / den);
}

double kde_kld(std::span<const double> pred, std::span<const double> ref, std::size_t dim) {
  const std::size_t np = count(pred, dim, "kde_kld"), nr = count(ref, dim, "kde_kld");
  require(std::min(np, nr), 30, "kde_kld");
  constexpr std::size_t kGrid = 512;
  double total = 0.0;
  for (std::size_t m = 0; m < dim; ++m) {
    const auto p = column(pred, dim, m);
    const auto r = column(ref, dim, m);
    const double hp = std::pow(static_cast<double>(np), -0.2) * stddev(p);
    const double hr = std::pow(static_cast<double>(nr), -0.2) * stddev(r);
    if (!(hp > 0.0) || !(hr > 0.0)) {
      throw std::invalid_argument("kde_kld: dimension " + std::to_string(m) + " has zero spread");
    }
    const auto [pmin, pmax] = std::minmax_element(p.begin(), p.end());
    const auto [rmin, rmax] = std::minmax_element(r.begin(), r.end());
    const double pad = 3.0 * std::max(hp, hr);
    const double lo = std::min(*pmin, *rmin) - pad, hi = std::max(*pmax, *rmax) + pad;
    std::vector<double> grid(kGrid);
    for (std::size_t g = 0; g < kGrid; ++g) grid[g] = lo + (hi - lo) * static_cast<double>(g) / (kGrid - 1);
    const auto lp = log_kde(p, hp, grid);
    const auto lr = log_kde(r, hr, grid);
    const double step = (hi - lo) / (kGrid - 1);
    double integral = 0.0;
    for (std::size_t g = 0; g < kGrid; ++g) {
      const double f = std::exp(lr[g]) * (lr[g] - lp[g]);
      integral += (g == 0 || g + 1 == kGrid ? 0.5 : 1.0) * f;
    }
    total += integral * step;
  }
  return total;
}

std::vector<double> median_bandwidths(std::span<const double> pred, std::span<const double> ref, std::size_t dim,
                                      std::span<const double> scales) {
  const std::size_t np = count(pred, dim, "median_bandwidths"), nr = count(ref, dim, "median_bandwidths");
  std::vector<double> pooled(pred.begin(), pred.end());
  pooled.insert(pooled.end(), ref.begin(), ref.end());
  const std::size_t n = np + nr;
  require(n, 2, "median_bandwidths");
  // Cap the pair count so the heuristic stays cheap on large sets.
  const std::size_t stride = std::max<std::size_t>(1, n / 1000);
  std::vector<double> d;
  for (std::size_t i = 0; i < n; i += stride) {
    for (std::size_t j = i + stride; j < n; j += stride) {
      d.push_back(std::sqrt(sq_dist(pooled.data() + i * dim, pooled.data() + j * dim, dim)));
    }
  }
  std::nth_element(d.begin(), d.begin() + static_cast<long>(d.size() / 2), d.end());
  const double med = d[d.size() / 2];
  static constexpr double kDefault[] = {0.5, 1.0, 2.0, 4.0};
  if (scales.empty()) scales = kDefault;
  std::vector<double> out;
  for (double s : scales) out.push_back(s * med);
  return out;
}

double mmd(std::span<const double> pred, std::span<const double> ref, std::size_t dim,
           std::span<const double> bandwidths) {
  const std::size_t np = count(pred, dim, "mmd"), nr = count(ref, dim, "mmd");
  require(std::min(np, nr), 2, "mmd");
  if (bandwidths.empty()) throw std::invalid_argument("mmd: no bandwidths");
  std::vector<double> coef;
  for (double h : bandwidths) {
    if (!(h > 0.0)) throw std::invalid_argument("mmd: bandwidths must be positive");
    coef.push_back(-1.0 / (2.0 * h * h));
  }
  const double inv_h = 1.0 / static_cast<double>(coef.size());
  auto k = [&](const double* a, const double* b) {
    const double d2 = sq_dist(a, b, dim);
    double s = 0.0;
    for (double c : coef) s += std::exp(c * d2);
    return s * inv_h;
  };
  auto within = [&](std::span<const double> s, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) acc += k(s.data() + i * dim, s.data() + j * dim);
    }
    return 2.0 * acc / (static_cast<double>(n) * static_cast<double>(n - 1));
  };
  // Fixed summation order regardless of argument order, so mmd(a, b) == mmd(b, a) exactly.
  const bool swap = std::lexicographical_compare(ref.begin(), ref.end(), pred.begin(), pred.end());
  const auto outer = swap ? ref : pred, inner = swap ? pred : ref;
  const std::size_t no = swap ? nr : np, ni = swap ? np : nr;
  double cross = 0.0;
  for (std::size_t i = 0; i < no; ++i) {
    for (std::size_t j = 0; j < ni; ++j) cross += k(outer.data() + i * dim, inner.data() + j * dim);
  }
  cross /= static_cast<double>(np) * static_cast<double>(nr);
  return within(pred, np) + within(ref, nr) - 2.0 * cross;
}

double wass1(std::span<const double> pred, std::span<const double> ref, std::size_t dim, double lo, double hi,
             std::size_t bins) {
  const std::size_t np = count(pred, dim, "wass1"), nr = count(ref, dim, "wass1");
  require(std::min(np, nr), 1, "wass1");
  if (!(hi > lo) || bins == 0) throw std::invalid_argument("wass1: invalid histogram range");
  const double width = (hi - lo) / static_cast<double>(bins);
  auto bin_of = [&](double v) {
    const double b = std::floor((v - lo) / width);
    if (b < 0) return std::size_t{0};
    if (b >= static_cast<double>(bins)) return bins - 1;
    return static_cast<std::size_t>(b);
  };
  double total = 0.0;
  std::vector<double> hp(bins), hr(bins);
  for (std::size_t m = 0; m < dim; ++m) {
    std::fill(hp.begin(), hp.end(), 0.0);
    std::fill(hr.begin(), hr.end(), 0.0);
    for (std::size_t i = 0; i < np; ++i) hp[bin_of(pred[i * dim + m])] += 1.0;
    for (std::size_t i = 0; i < nr; ++i) hr[bin_of(ref[i * dim + m])] += 1.0;
    double cp = 0.0, cr = 0.0, integral = 0.0;
    for (std::size_t b = 0; b < bins; ++b) {
      cp += hp[b] / static_cast<double>(np);
      cr += hr[b] / static_cast<double>(nr);
      integral += std::abs(cp - cr) * width;
    }
    total += integral;
  }
  return total / static_cast<double>(dim);
}

double variability(std::span<const double> samples, std::size_t dim, std::size_t group_size) {
  const std::size_t n = count(samples, dim, "variability");
  if (group_size == 0 || n % group_size != 0) {
    throw std::invalid_argument("variability: " + std::to_string(n) + " samples do not split into groups of " +
                                std::to_string(group_size));
  }
  double ss = 0.0;
  std::vector<double> mean(dim);
  for (std::size_t g = 0; g < n / group_size; ++g) {
    std::fill(mean.begin(), mean.end(), 0.0);
    for (std::size_t i = 0; i < group_size; ++i) {
      for (std::size_t m = 0; m < dim; ++m) mean[m] += samples[(g * group_size + i) * dim + m];
    }
    for (double& v : mean) v /= static_cast<double>(group_size);
    for (std::size_t i = 0; i < group_size; ++i) {
      for (std::size_t m = 0; m < dim; ++m) {
        const double dlt = samples[(g * group_size + i) * dim + m] - mean[m];
        ss += dlt * dlt;
      }
    }
  }
  return std::sqrt(ss / (static_cast<double>(n) * static_cast<double>(dim)));
}

double smape(std::span<const double> y, std::span<const double> y_prime) {
  if (y.size() != y_prime.size() || y.empty()) throw std::invalid_argument("smape: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double den = 0.5 * (std::abs(y[i]) + std::abs(y_prime[i]));
    if (den > 0.0) s += std::abs(y[i] - y_prime[i]) / den;
  }
  return s / static_cast<double>(y.size());
}

double constraint_rmse(std::span<const double> samples, const ks::SelectionMask& mask,
                       std::span<const double> conditions) {
  const std::size_t n = count(samples, mask.d, "constraint_rmse");
  if (conditions.size() != n * mask.d_prime) {
    throw std::invalid_argument("constraint_rmse: need one coarse condition per sample");
  }
  require(n, 1, "constraint_rmse");
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto sel = ks::apply_selection(samples.subspan(i * mask.d, mask.d), mask);
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < sel.size(); ++k) {
      const double r = sel[k] - conditions[i * mask.d_prime + k];
      num += r * r;
      den += sel[k] * sel[k];
    }
    total += den > 0.0 ? std::sqrt(num / den) : (num > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
  }
  return total / static_cast<double>(n);
}

}  // namespace dsk::metrics
