#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dsk/tensor.hpp"
#include "dsk/unet.hpp"

namespace dsk {

// Preconditioned denoiser D(x, sigma) = c_skip x + c_out F(c_in x, c_noise).
// The network works on standardized data, so sigma_data is 1 inside D;
// `sigma_data` records the scale to restore physical units.
struct DenoiserModel {
  UNetConfig cfg;
  ParameterSet params;
  ParameterSet ema;
  double sigma_data = 1.0;
};

struct Preconditioning {
  double c_skip, c_out, c_in, c_noise;
};
Preconditioning preconditioning(double sigma, double sigma_d = 1.0);

DenoiserModel make_denoiser(const UNetConfig& cfg, std::uint64_t seed, double sigma_data = 1.0);

// x_hat: [L] (may be tracked); `params` selects raw or EMA weights.
Tensor denoiser_apply(const UNetConfig& cfg, const ParameterSet& params, const Tensor& x_hat, double sigma);

// Signature shared by learned and analytic denoisers.
using DenoiserFn = std::function<std::vector<double>(std::span<const double> x_hat, double sigma)>;

// Evaluates with the EMA parameters, without recording gradients.
DenoiserFn ema_denoiser(const DenoiserModel& model);

// Checkpoint (raw parameters under "raw/", EMA under "ema/") plus a JSON
// sidecar holding the network configuration and sigma_data.
void save_denoiser(const std::filesystem::path& path, const DenoiserModel& model, const std::string& extra_json = "{}");
DenoiserModel load_denoiser(const std::filesystem::path& path);

std::string unet_config_json(const UNetConfig& cfg);

}  // namespace dsk
