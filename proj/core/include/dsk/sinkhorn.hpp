#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dsk/dataset.hpp"

// Entropic optimal transport between two empirical measures with uniform
// weights and cost c(y, y') = |y - y'|^2 / 2.
namespace dsk::ot {

struct SinkhornOptions {
  double epsilon = 1e-3;
  std::size_t max_iters = 5000;
  double tol = 1e-6;
  std::size_t history_every = 50;
  // Cost matrix (and its transpose) are kept in memory up to this many entries.
  std::size_t max_materialized = 25'000'000;
  unsigned threads = 1;
};

struct EntropicTransport {
  double epsilon = 0.0;
  std::size_t dim = 0;
  std::vector<double> f;       // potentials on source samples
  std::vector<double> g;       // potentials on target samples
  std::vector<double> source;  // n x dim, row-major
  std::vector<double> target;  // m x dim, row-major
  std::size_t iterations_run = 0;
  double marginal_error = 0.0;  // L1 row-marginal violation; columns are exact
  std::vector<double> error_history;  // one entry every history_every iterations

  std::size_t n() const { return f.size(); }
  std::size_t m() const { return g.size(); }

  double cost(std::size_t i, std::size_t j) const;
  // gamma_ij = exp((f_i + g_j - c_ij) / eps) / (n m)
  double plan(std::size_t i, std::size_t j) const;
  std::vector<double> plan_matrix() const;
};

EntropicTransport sinkhorn_fit(std::span<const double> source, std::span<const double> target,
                               std::size_t dim, const SinkhornOptions& opts = {});

// Barycentric projection sum_j y'_j softmax_j((g_j - |y - y'_j|^2/2) / eps),
// defined for any y (out-of-sample extension).
std::vector<double> barycentric_map(const EntropicTransport& t, std::span<const double> y);

SnapshotDataset debias_dataset(const EntropicTransport& t, const SnapshotDataset& ds,
                               unsigned threads = 1);

// DOTM: "DOTM", eps f64, n u32, m u32, dim u32, then f, g, source, target.
std::string encode_transport(const EntropicTransport& t);
EntropicTransport decode_transport(std::string bytes, const std::string& what = "transport");
void save_transport(const std::filesystem::path& path, const EntropicTransport& t);
EntropicTransport load_transport(const std::filesystem::path& path);

}  // namespace dsk::ot
