#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dsk/ks.hpp"

// Distribution-level comparison of sample sets. Sample sets are row-major
// arrays of n samples of dimension `dim`.
namespace dsk::metrics {

// E(k) = sum over wavenumbers with |k| = k of |sum_i u_i e^{-2 pi i k i/n}|^2,
// for k = 0..n/2 (unnormalized DFT).
std::vector<double> energy_spectrum(std::span<const double> u);
std::vector<double> mean_energy_spectrum(std::span<const double> samples, std::size_t dim);

struct MelrResult {
  double value = 0.0;
  std::size_t excluded = 0;        // modes with (numerically) zero reference energy
  std::vector<double> log_ratio;   // log(E_pred/E_ref) per mode, 0 where excluded
};

// sum_k w_k |log(E_pred(k)/E_ref(k))| with w_k = 1/card(k) or E_ref(k)/sum E_ref.
// Modes with E_ref <= 1e-20 * sum E_ref are excluded and counted.
MelrResult melr(std::span<const double> e_pred, std::span<const double> e_ref, bool weighted);

// Covariances with 1/N normalization; |Cov_pred - Cov_ref|_F / |Cov_pred|_F.
std::vector<double> covariance(std::span<const double> samples, std::size_t dim);
double cov_rmse(std::span<const double> pred, std::span<const double> ref, std::size_t dim);

// Sum over dimensions of KL(ref || pred) between 1D Gaussian KDEs with
// Scott bandwidths, integrated by the trapezoid rule on 512 points.
double kde_kld(std::span<const double> pred, std::span<const double> ref, std::size_t dim);

// Median pairwise distance of the pooled samples times `scales`.
std::vector<double> median_bandwidths(std::span<const double> pred, std::span<const double> ref, std::size_t dim,
                                      std::span<const double> scales = {});
// Unbiased MMD^2 with k(a, b) = mean_h exp(-|a - b|^2 / (2 h^2)).
double mmd(std::span<const double> pred, std::span<const double> ref, std::size_t dim,
           std::span<const double> bandwidths);

// Mean over dimensions of the integral of |CDF_pred - CDF_ref|, with CDFs from
// histograms on [lo, hi]. Values outside the range fall into the edge bins.
double wass1(std::span<const double> pred, std::span<const double> ref, std::size_t dim, double lo = -20.0,
             double hi = 20.0, std::size_t bins = 400);

// Samples grouped contiguously, `group_size` per condition: root mean squared
// deviation from the per-condition mean.
double variability(std::span<const double> samples, std::size_t dim, std::size_t group_size);

// mean |y - y'| / ((|y| + |y'|)/2), elementwise; 0/0 counts as 0.
double smape(std::span<const double> y, std::span<const double> y_prime);

// Mean over samples of |C'x_n - y'_n| / |C'x_n|. `conditions` holds one
// coarse field per sample.
double constraint_rmse(std::span<const double> samples, const ks::SelectionMask& mask,
                       std::span<const double> conditions);

}  // namespace dsk::metrics
