#include "dsk/fft.hpp"

#include <fftw3.h>

#include <algorithm>
#include <mutex>
#include <stdexcept>
#include <string>

namespace dsk {
namespace {

// FFTW's planner is not re-entrant.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace

RealFft::RealFft(std::size_t n) : n_(n) {
  if (n < 2) throw std::invalid_argument("RealFft: length must be at least 2, got " + std::to_string(n));
  std::lock_guard lock(planner_mutex());
  real_ = static_cast<double*>(fftw_malloc(sizeof(double) * n));
  spec_ = static_cast<std::complex<double>*>(fftw_malloc(sizeof(fftw_complex) * modes()));
  auto* c = reinterpret_cast<fftw_complex*>(spec_);
  const int len = static_cast<int>(n);
  plan_fwd_ = fftw_plan_dft_r2c_1d(len, real_, c, FFTW_ESTIMATE);
  plan_inv_ = fftw_plan_dft_c2r_1d(len, c, real_, FFTW_ESTIMATE);
  if (!plan_fwd_ || !plan_inv_) throw std::runtime_error("FFTW planning failed for n=" + std::to_string(n));
}

RealFft::~RealFft() {
  std::lock_guard lock(planner_mutex());
  if (plan_fwd_) fftw_destroy_plan(static_cast<fftw_plan>(plan_fwd_));
  if (plan_inv_) fftw_destroy_plan(static_cast<fftw_plan>(plan_inv_));
  fftw_free(real_);
  fftw_free(spec_);
}

void RealFft::forward(std::span<const double> in, std::span<std::complex<double>> out) {
  if (in.size() != n_ || out.size() != modes()) {
    throw std::invalid_argument("RealFft::forward: size mismatch");
  }
  std::copy(in.begin(), in.end(), real_);
  fftw_execute(static_cast<fftw_plan>(plan_fwd_));
  std::copy(spec_, spec_ + modes(), out.begin());
}

void RealFft::inverse(std::span<const std::complex<double>> in, std::span<double> out) {
  if (in.size() != modes() || out.size() != n_) {
    throw std::invalid_argument("RealFft::inverse: size mismatch");
  }
  std::copy(in.begin(), in.end(), spec_);
  fftw_execute(static_cast<fftw_plan>(plan_inv_));
  const double inv = 1.0 / static_cast<double>(n_);
  for (std::size_t i = 0; i < n_; ++i) out[i] = real_[i] * inv;
}

}  // namespace dsk
