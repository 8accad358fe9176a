#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace dsk::baselines {

// Periodic Keys cubic-convolution interpolation (a = -0.5) from d' coarse
// nodes to d' * factor points; coarse node j sits at fine index j * factor.
std::vector<double> cubic_upsample(std::span<const double> y, std::size_t factor);

// Per-pixel quantile boundaries at levels q/Q, q = 0..Q, for the interpolated
// source and for the reference distribution.
struct QuantileTable {
  std::size_t levels = 0;  // Q
  std::size_t dim = 0;
  std::vector<double> source;     // dim x (Q + 1)
  std::vector<double> reference;  // dim x (Q + 1)

  std::span<const double> source_row(std::size_t p) const {
    return std::span<const double>(source).subspan(p * (levels + 1), levels + 1);
  }
  std::span<const double> reference_row(std::size_t p) const {
    return std::span<const double>(reference).subspan(p * (levels + 1), levels + 1);
  }
};

QuantileTable fit_quantile_table(std::span<const double> source, std::span<const double> reference, std::size_t dim,
                                 std::size_t levels = 1000);

// Per pixel: find the source segment containing the value (clamped to the end
// segments) and return the midpoint of the matching reference segment.
// `clamped`, if given, is incremented once per out-of-range value.
std::vector<double> quantile_match(std::span<const double> x, const QuantileTable& qt, std::size_t* clamped = nullptr);

// Cubic upsampling followed by quantile matching.
std::vector<double> bcsd(std::span<const double> y, const QuantileTable& qt, std::size_t factor,
                         std::size_t* clamped = nullptr);

// DQTB: "DQTB", Q u32, d u32, then source and reference boundaries.
std::string encode_quantile_table(const QuantileTable& qt);
QuantileTable decode_quantile_table(std::string bytes, const std::string& what = "quantile table");
void save_quantile_table(const std::filesystem::path& path, const QuantileTable& qt);
QuantileTable load_quantile_table(const std::filesystem::path& path);

}  // namespace dsk::baselines
