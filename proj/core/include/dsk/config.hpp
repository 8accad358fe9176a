#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "dsk/diffusion.hpp"
#include "dsk/ks.hpp"
#include "dsk/sinkhorn.hpp"
#include "dsk/unet.hpp"

namespace dsk {

inline constexpr int kConfigVersion = 1;

struct OtConfig {
  double epsilon = 1e-3;
  std::size_t n_samples = 4000;  // leading snapshots used for OT fitting and denoiser training
  std::size_t max_iters = 5000;
  double tol = 1e-6;
};

struct SamplingConfig {
  std::size_t steps = 256;
  double alpha_tilde = 1.0;
  std::size_t conditions = 512;
  std::size_t samples_per_condition = 16;
  bool terminal_denoise = true;
};

struct MetricsConfig {
  std::vector<double> mmd_scales = {0.5, 1.0, 2.0, 4.0};
  double wass1_lo = -20.0;
  double wass1_hi = 20.0;
  std::size_t wass1_bins = 400;
};

struct RunConfig {
  std::string name = "default";
  std::uint64_t seed = 0;
  ks::Config hf = ks::default_high_fidelity();
  ks::Config lf = ks::default_low_fidelity();
  std::size_t d_prime = 24;
  std::size_t selection_offset = 0;
  OtConfig ot;
  UNetConfig unet;
  TrainConfig train;
  SamplingConfig sampling;
  MetricsConfig metrics;
  std::size_t bcsd_quantiles = 1000;

  // Cross-field checks; throws ConfigError naming the offending field.
  void validate() const;
  ks::SelectionMask mask() const { return ks::SelectionMask::make(hf.n_grid, d_prime, selection_offset); }
};

// Parses a versioned JSON document. Missing keys take defaults; unknown keys
// and type mismatches throw ConfigError with the field path.
RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::filesystem::path& path);

// Fully resolved configuration as canonical (sorted-key) JSON.
std::string canonical_json(const RunConfig& cfg);
// FNV-1a 64 of canonical_json, as 16 hex digits.
std::string config_hash(const RunConfig& cfg);

}  // namespace dsk
