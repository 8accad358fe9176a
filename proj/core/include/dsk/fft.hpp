#pragma once

#include <complex>
#include <cstddef>
#include <span>

namespace dsk {

// Real-to-complex DFT of fixed length n backed by FFTW. forward() is the
// unnormalized sum X_k = sum_j x_j e^{-2 pi i jk/n} for k = 0..n/2; inverse()
// includes the 1/n factor. An instance owns scratch buffers and is not safe
// for concurrent use; create one per thread.
class RealFft {
 public:
  explicit RealFft(std::size_t n);
  ~RealFft();
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  std::size_t size() const { return n_; }
  std::size_t modes() const { return n_ / 2 + 1; }

  void forward(std::span<const double> in, std::span<std::complex<double>> out);
  void inverse(std::span<const std::complex<double>> in, std::span<double> out);

 private:
  std::size_t n_;
  double* real_ = nullptr;
  std::complex<double>* spec_ = nullptr;
  void* plan_fwd_ = nullptr;
  void* plan_inv_ = nullptr;
};

}  // namespace dsk
