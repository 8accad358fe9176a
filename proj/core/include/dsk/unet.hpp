#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "dsk/seed.hpp"
#include "dsk/tensor.hpp"

namespace dsk {

struct UNetConfig {
  std::size_t length = 192;
  std::vector<std::size_t> channels = {16, 32, 64};  // one entry per level
  std::size_t blocks = 2;                            // residual blocks per level
  std::size_t noise_dim = 32;                        // Fourier features (sin + cos)
  std::size_t groups = 8;

  void validate() const;  // throws ConfigError
  std::size_t levels() const { return channels.size(); }
  // Each level halves the resolution.
  std::size_t total_stride() const { return std::size_t{1} << levels(); }
};

// L = 16, two levels of 4 channels: small enough for finite-difference checks.
UNetConfig tiny_unet_config();

// [sin(2 pi f_k c), cos(2 pi f_k c)] with c = log(sigma)/4 and dim/2
// log-spaced frequencies f_k in [0.1, 10].
std::vector<double> fourier_noise_embedding(double sigma, std::size_t dim);

// Kaiming fan-in initialization; the output head and the second convolution
// of each residual block start at zero.
ParameterSet init_unet(const UNetConfig& cfg, Rng& rng);

// x: [1, L], features: [noise_dim] -> [1, L]. Parameters may be tracked.
Tensor unet_forward(const UNetConfig& cfg, const ParameterSet& params, const Tensor& x,
                    const Tensor& features);

}  // namespace dsk
