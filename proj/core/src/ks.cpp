#include "dsk/ks.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <thread>

#include <json.hpp>

#include "dsk/errors.hpp"
#include "dsk/version.hpp"

namespace dsk::ks {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Low-storage IMEX Runge–Kutta coefficients (Carpenter–Kennedy 5-stage,
// 4th order explicit part with trapezoidal implicit stages).
constexpr double kAlpha[6] = {0.0, 0.1496590219993, 0.3704009573644,
                              0.6222557631345, 0.9582821306748, 1.0};
constexpr double kBeta[5] = {0.0, -0.4178904745, -1.192151694643, -1.697784692471,
                             -1.514183444257};
constexpr double kGamma[5] = {0.1496590219993, 0.3792103129999, 0.8229550293869,
                              0.6994504559488, 0.1530572479681};

std::size_t steps_for(double duration, double dt, const char* what) {
  const double r = duration / dt;
  const auto n = static_cast<std::size_t>(std::llround(r));
  if (std::abs(r - static_cast<double>(n)) > 1e-6 * std::max(1.0, r)) {
    throw ConfigError(std::string(what) + " is not a multiple of dt");
  }
  return n;
}

void check_finite(std::span<const double> u, std::size_t step, const char* solver) {
  for (double v : u) {
    if (!std::isfinite(v)) {
      throw NumericalError(std::string(solver) + " blew up at step " + std::to_string(step));
    }
  }
}

void check_finite(std::span<const std::complex<double>> u, std::size_t step, const char* solver) {
  for (auto v : u) {
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) {
      throw NumericalError(std::string(solver) + " blew up at step " + std::to_string(step));
    }
  }
}

}  // namespace

std::string fidelity_name(Fidelity f) { return f == Fidelity::kHigh ? "high" : "low"; }

void Config::validate() const {
  if (!(L > 0)) throw ConfigError("L must be positive");
  if (!(nu > 0)) throw ConfigError("nu must be positive");
  if (n_grid < 8 || n_grid % 2 != 0) throw ConfigError("n_grid must be even and >= 8");
  if (!(dt > 0)) throw ConfigError("dt must be positive");
  if (!(sample_interval >= dt)) throw ConfigError("sample_interval must be >= dt");
  if (ramp_time < 0) throw ConfigError("ramp_time must be non-negative");
  if (n_modes == 0) throw ConfigError("n_modes must be positive");
  steps_for(ramp_time, dt, "ramp_time");
  steps_for(sample_interval, dt, "sample_interval");
}

Config default_high_fidelity() { return Config{}; }

Config default_low_fidelity() {
  Config c;
  c.n_grid = 48;
  c.dt = 0.02;
  return c;
}

std::vector<double> sample_initial_condition(const Config& cfg, Rng& rng) {
  std::vector<double> a(cfg.n_modes), phi(cfg.n_modes), w(cfg.n_modes);
  for (std::size_t j = 0; j < cfg.n_modes; ++j) {
    a[j] = rng.uniform(-0.5, 0.5);
    phi[j] = rng.uniform(0.0, kTwoPi);
    w[j] = kTwoPi * static_cast<double>(1 + rng.below(3)) / cfg.L;
  }
  std::vector<double> u(cfg.n_grid, 0.0);
  const double dx = cfg.L / static_cast<double>(cfg.n_grid);
  for (std::size_t i = 0; i < cfg.n_grid; ++i) {
    const double x = dx * static_cast<double>(i);
    double s = 0.0;
    for (std::size_t j = 0; j < cfg.n_modes; ++j) s += a[j] * std::sin(w[j] * x + phi[j]);
    u[i] = s;
  }
  return u;
}

SpectralSolver::SpectralSolver(const Config& cfg, bool nonlinear)
    : cfg_(cfg), nonlinear_(nonlinear), fft_(cfg.n_grid) {
  const std::size_t m = fft_.modes();
  k_.resize(m);
  lin_.resize(m);
  keep_.resize(m);
  for (std::size_t j = 0; j < m; ++j) {
    k_[j] = kTwoPi * static_cast<double>(j) / cfg.L;
    const double k2 = k_[j] * k_[j];
    lin_[j] = cfg.nu * k2 - cfg.nu * k2 * k2;
    // 2/3 rule; the Nyquist mode is always dropped.
    keep_[j] = 3 * j < cfg.n_grid && 2 * j != cfg.n_grid;
  }
  field_.resize(cfg.n_grid);
  h_.resize(m);
  n_.resize(m);
}

double SpectralSolver::wavenumber(std::size_t j) const { return k_.at(j); }
double SpectralSolver::linear_symbol(std::size_t j) const { return lin_.at(j); }

Modes SpectralSolver::to_modes(std::span<const double> u) {
  Modes out(fft_.modes());
  fft_.forward(u, out);
  return out;
}

std::vector<double> SpectralSolver::to_field(const Modes& u_hat) {
  std::vector<double> out(cfg_.n_grid);
  fft_.inverse(u_hat, out);
  return out;
}

void SpectralSolver::nonlinear_term(const Modes& u_hat, Modes& out) {
  if (!nonlinear_) {
    std::fill(out.begin(), out.end(), std::complex<double>{});
    return;
  }
  fft_.inverse(u_hat, field_);
  for (double& v : field_) v *= v;
  fft_.forward(field_, out);
  for (std::size_t j = 0; j < out.size(); ++j) {
    out[j] = keep_[j] ? std::complex<double>(0.0, -0.5 * k_[j]) * out[j] : 0.0;
  }
}

void SpectralSolver::step(Modes& u_hat) {
  if (u_hat.size() != fft_.modes()) {
    throw std::invalid_argument("SpectralSolver::step: expected " + std::to_string(fft_.modes()) +
                                " modes, got " + std::to_string(u_hat.size()));
  }
  const double dt = cfg_.dt;
  std::fill(h_.begin(), h_.end(), std::complex<double>{});
  for (int s = 0; s < 5; ++s) {
    nonlinear_term(u_hat, n_);
    const double mu = 0.5 * dt * (kAlpha[s + 1] - kAlpha[s]);
    for (std::size_t j = 0; j < u_hat.size(); ++j) {
      h_[j] = n_[j] + kBeta[s] * h_[j];
      u_hat[j] = (u_hat[j] + kGamma[s] * dt * h_[j] + mu * lin_[j] * u_hat[j]) /
                 (1.0 - mu * lin_[j]);
    }
  }
  u_hat[0].imag(0.0);
  if (cfg_.n_grid % 2 == 0) u_hat.back() = 0.0;
  ++steps_;
  check_finite(u_hat, steps_, "spectral solver");
}

std::vector<double> SpectralSolver::advance(std::span<const double> u, std::size_t steps) {
  Modes u_hat = to_modes(u);
  for (std::size_t i = 0; i < steps; ++i) step(u_hat);
  return to_field(u_hat);
}

FiniteVolumeSolver::FiniteVolumeSolver(const Config& cfg) : cfg_(cfg), fft_(cfg.n_grid) {
  const double dx = cfg.L / static_cast<double>(cfg.n_grid);
  lambda_.resize(fft_.modes());
  for (std::size_t j = 0; j < lambda_.size(); ++j) {
    const double theta = kTwoPi * static_cast<double>(j) / static_cast<double>(cfg.n_grid);
    const double d2 = (2.0 * std::cos(theta) - 2.0) / (dx * dx);
    const double d4 = d2 * d2;
    lambda_[j] = -cfg.nu * d2 - cfg.nu * d4;
  }
  flux_.resize(cfg.n_grid);
  rhs_.resize(cfg.n_grid);
  rhs_hat_.resize(fft_.modes());
  u_hat_.resize(fft_.modes());
}

void FiniteVolumeSolver::step(std::vector<double>& u) {
  const std::size_t n = cfg_.n_grid;
  if (u.size() != n) {
    throw std::invalid_argument("FiniteVolumeSolver::step: expected " + std::to_string(n) +
                                " cells, got " + std::to_string(u.size()));
  }
  const double dx = cfg_.L / static_cast<double>(n);
  const double r = cfg_.dt / dx;
  auto at = [&](std::size_t i) { return u[i % n]; };
  // flux_[i] is the flux through the interface between cells i and i+1.
  for (std::size_t i = 0; i < n; ++i) {
    const double ul = u[i], ur = at(i + 1);
    const double a = 0.5 * (ul + ur);
    const double delta = ur - ul;
    double phi = 0.0;
    if (delta != 0.0) {
      const double upwind = a >= 0.0 ? ul - at(i + n - 1) : at(i + 2) - ur;
      const double theta = upwind / delta;
      phi = (theta + std::abs(theta)) / (1.0 + std::abs(theta));
    }
    const double aa = std::abs(a);
    flux_[i] = 0.25 * (ul * ul + ur * ur) - 0.5 * aa * delta +
               0.5 * aa * (1.0 - r * aa) * phi * delta;
  }
  for (std::size_t i = 0; i < n; ++i) {
    rhs_[i] = -r * (flux_[i] - flux_[(i + n - 1) % n]);
  }
  fft_.forward(u, u_hat_);
  fft_.forward(rhs_, rhs_hat_);
  const double h = 0.5 * cfg_.dt;
  for (std::size_t j = 0; j < u_hat_.size(); ++j) {
    u_hat_[j] = ((1.0 + h * lambda_[j]) * u_hat_[j] + rhs_hat_[j]) / (1.0 - h * lambda_[j]);
  }
  fft_.inverse(u_hat_, u);
  ++steps_;
  check_finite(u, steps_, "finite-volume solver");
}

std::vector<double> FiniteVolumeSolver::advance(std::span<const double> u, std::size_t steps) {
  std::vector<double> v(u.begin(), u.end());
  for (std::size_t i = 0; i < steps; ++i) step(v);
  return v;
}

namespace {

void run_trajectory(const Config& cfg, Fidelity fidelity, std::size_t traj, std::span<double> out) {
  Rng rng(derive_seed(cfg.seed, "ks-trajectory", traj));
  const auto u0 = sample_initial_condition(cfg, rng);
  const std::size_t ramp = steps_for(cfg.ramp_time, cfg.dt, "ramp_time");
  const std::size_t interval = steps_for(cfg.sample_interval, cfg.dt, "sample_interval");
  const std::size_t n = cfg.n_grid;
  if (fidelity == Fidelity::kHigh) {
    SpectralSolver solver(cfg);
    Modes u_hat = solver.to_modes(u0);
    for (std::size_t i = 0; i < ramp; ++i) solver.step(u_hat);
    for (std::size_t s = 0; s < cfg.n_snapshots_per_traj; ++s) {
      for (std::size_t i = 0; i < interval; ++i) solver.step(u_hat);
      const auto u = solver.to_field(u_hat);
      std::copy(u.begin(), u.end(), out.begin() + static_cast<long>(s * n));
    }
  } else {
    FiniteVolumeSolver solver(cfg);
    std::vector<double> u = u0;
    for (std::size_t i = 0; i < ramp; ++i) solver.step(u);
    for (std::size_t s = 0; s < cfg.n_snapshots_per_traj; ++s) {
      for (std::size_t i = 0; i < interval; ++i) solver.step(u);
      std::copy(u.begin(), u.end(), out.begin() + static_cast<long>(s * n));
    }
  }
}

}  // namespace

SnapshotDataset simulate(const Config& cfg, Fidelity fidelity, unsigned threads) {
  cfg.validate();
  const std::size_t per_traj = cfg.n_snapshots_per_traj * cfg.n_grid;
  std::vector<double> values(cfg.n_trajectories * per_traj);
  std::span<double> all(values);

  const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(threads, cfg.n_trajectories));
  std::vector<std::exception_ptr> errors(workers);
  auto work = [&](std::size_t w) {
    try {
      for (std::size_t t = w; t < cfg.n_trajectories; t += workers) {
        run_trajectory(cfg, fidelity, t, all.subspan(t * per_traj, per_traj));
      }
    } catch (...) {
      errors[w] = std::current_exception();
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w);
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  nlohmann::json meta = {
      {"fidelity", fidelity_name(fidelity)},
      {"config",
       {{"L", cfg.L},
        {"nu", cfg.nu},
        {"n_grid", cfg.n_grid},
        {"dt", cfg.dt},
        {"n_modes", cfg.n_modes},
        {"ramp_time", cfg.ramp_time},
        {"sample_interval", cfg.sample_interval},
        {"n_snapshots_per_traj", cfg.n_snapshots_per_traj},
        {"n_trajectories", cfg.n_trajectories}}},
      {"seed", cfg.seed},
      {"git_describe", git_describe()}};
  return SnapshotDataset(cfg.n_grid, std::move(values), meta.dump());
}

SelectionMask SelectionMask::make(std::size_t d, std::size_t d_prime, std::size_t offset) {
  if (d_prime == 0 || d % d_prime != 0) {
    throw std::invalid_argument("selection mask: " + std::to_string(d) + " is not a multiple of " +
                                std::to_string(d_prime));
  }
  const std::size_t stride = d / d_prime;
  if (offset >= stride) {
    throw std::invalid_argument("selection mask: offset " + std::to_string(offset) +
                                " must be below stride " + std::to_string(stride));
  }
  return SelectionMask{d, d_prime, stride, offset};
}

std::vector<std::size_t> SelectionMask::indices() const {
  std::vector<std::size_t> idx(d_prime);
  for (std::size_t i = 0; i < d_prime; ++i) idx[i] = index(i);
  return idx;
}

std::vector<double> apply_selection(std::span<const double> x, const SelectionMask& mask) {
  if (x.size() != mask.d) {
    throw std::invalid_argument("apply_selection: field length " + std::to_string(x.size()) +
                                " does not match mask dimension " + std::to_string(mask.d));
  }
  std::vector<double> y(mask.d_prime);
  for (std::size_t i = 0; i < mask.d_prime; ++i) y[i] = x[mask.index(i)];
  return y;
}

SnapshotDataset apply_selection(const SnapshotDataset& ds, const SelectionMask& mask) {
  std::vector<double> values;
  values.reserve(ds.size() * mask.d_prime);
  for (std::size_t s = 0; s < ds.size(); ++s) {
    const auto y = apply_selection(ds.snapshot(s), mask);
    values.insert(values.end(), y.begin(), y.end());
  }
  auto meta = nlohmann::json::parse(ds.metadata);
  meta["selection"] = {{"d", mask.d}, {"d_prime", mask.d_prime}, {"stride", mask.stride},
                       {"offset", mask.offset}};
  return SnapshotDataset(mask.d_prime, std::move(values), meta.dump());
}

std::vector<double> lf_to_y(std::span<const double> u, std::size_t d_prime) {
  if (d_prime == 0 || u.size() % d_prime != 0) {
    throw std::invalid_argument("lf_to_y: length " + std::to_string(u.size()) +
                                " is not divisible by " + std::to_string(d_prime));
  }
  const std::size_t stride = u.size() / d_prime;
  std::vector<double> y(d_prime);
  for (std::size_t i = 0; i < d_prime; ++i) y[i] = u[i * stride];
  return y;
}

SnapshotDataset lf_to_y(const SnapshotDataset& ds, std::size_t d_prime) {
  std::vector<double> values;
  values.reserve(ds.size() * d_prime);
  for (std::size_t s = 0; s < ds.size(); ++s) {
    const auto y = lf_to_y(ds.snapshot(s), d_prime);
    values.insert(values.end(), y.begin(), y.end());
  }
  auto meta = nlohmann::json::parse(ds.metadata);
  meta["subsampled_to"] = d_prime;
  return SnapshotDataset(d_prime, std::move(values), meta.dump());
}

}  // namespace dsk::ks
