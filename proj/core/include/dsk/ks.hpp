#pragma once

#include <complex>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "dsk/dataset.hpp"
#include "dsk/fft.hpp"
#include "dsk/seed.hpp"

// Kuramoto–Sivashinsky u_t + u u_x + nu u_xx + nu u_xxxx = 0 on a periodic
// domain of length L.
namespace dsk::ks {

enum class Fidelity { kHigh, kLow };
std::string fidelity_name(Fidelity f);

struct Config {
  double L = 64.0;
  double nu = 1.0;
  std::size_t n_grid = 192;
  double dt = 0.0025;
  std::size_t n_modes = 30;
  double ramp_time = 25.0;
  double sample_interval = 12.5;
  std::size_t n_snapshots_per_traj = 80;
  std::size_t n_trajectories = 64;
  std::uint64_t seed = 0;

  void validate() const;  // throws ConfigError
};

Config default_high_fidelity();
Config default_low_fidelity();

using Modes = std::vector<std::complex<double>>;

// u0(x) = sum_j a_j sin(w_j x + phi_j), a_j ~ U[-1/2, 1/2], phi_j ~ U[0, 2 pi],
// w_j drawn uniformly from {2 pi/L, 4 pi/L, 6 pi/L}.
std::vector<double> sample_initial_condition(const Config& cfg, Rng& rng);

// Pseudo-spectral integrator: the stiff linear part (nu k^2 - nu k^4) is
// treated implicitly and -(1/2) d/dx (u^2) explicitly in a low-storage
// 4th-order IMEX Runge-Kutta (Crank–Nicolson stages), 2/3-rule dealiasing.
class SpectralSolver {
 public:
  explicit SpectralSolver(const Config& cfg, bool nonlinear = true);

  Modes to_modes(std::span<const double> u);
  std::vector<double> to_field(const Modes& u_hat);

  // One step of cfg.dt. Throws NumericalError naming the step index on NaN/Inf.
  void step(Modes& u_hat);
  std::vector<double> advance(std::span<const double> u, std::size_t steps);

  double wavenumber(std::size_t j) const;
  double linear_symbol(std::size_t j) const;
  std::size_t steps_taken() const { return steps_; }

 private:
  void nonlinear_term(const Modes& u_hat, Modes& out);

  Config cfg_;
  bool nonlinear_;
  RealFft fft_;
  std::vector<double> k_, lin_;
  std::vector<char> keep_;
  std::vector<double> field_;
  Modes h_, n_;
  std::size_t steps_ = 0;
};

// Finite-volume integrator: flux u^2/2 by Van-Leer limited Lax–Wendroff;
// the second- and fourth-difference operators by Crank–Nicolson, solved by
// diagonalizing the periodic (circulant) matrices with the DFT.
class FiniteVolumeSolver {
 public:
  explicit FiniteVolumeSolver(const Config& cfg);

  void step(std::vector<double>& u);
  std::vector<double> advance(std::span<const double> u, std::size_t steps);
  std::size_t steps_taken() const { return steps_; }

 private:
  Config cfg_;
  RealFft fft_;
  std::vector<double> lambda_;
  std::vector<double> flux_, rhs_;
  Modes rhs_hat_, u_hat_;
  std::size_t steps_ = 0;
};

// Runs n_trajectories independent trajectories (seeded by splitting cfg.seed),
// discarding ramp_time and then keeping one snapshot every sample_interval.
SnapshotDataset simulate(const Config& cfg, Fidelity fidelity, unsigned threads = 1);

struct SelectionMask {
  std::size_t d = 0;
  std::size_t d_prime = 0;
  std::size_t stride = 1;
  std::size_t offset = 0;

  static SelectionMask make(std::size_t d, std::size_t d_prime, std::size_t offset = 0);
  std::vector<std::size_t> indices() const;
  std::size_t index(std::size_t i) const { return offset + i * stride; }
};

std::vector<double> apply_selection(std::span<const double> x, const SelectionMask& mask);
SnapshotDataset apply_selection(const SnapshotDataset& ds, const SelectionMask& mask);

// Stride-subsamples a low-fidelity field to the coarse dimension.
std::vector<double> lf_to_y(std::span<const double> u, std::size_t d_prime);
SnapshotDataset lf_to_y(const SnapshotDataset& ds, std::size_t d_prime);

}  // namespace dsk::ks
