#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "dsk/dataset.hpp"
#include "dsk/denoiser.hpp"
#include "dsk/schedule.hpp"
#include "dsk/seed.hpp"

namespace dsk {

struct Perturbed {
  std::vector<double> x_t;
  std::vector<double> noise;
};

// x_t = s_t (x0 + sigma_t eps), eps ~ N(0, I).
Perturbed perturb(const Schedule& sch, std::span<const double> x0, double t, Rng& rng);

// lambda(sigma) = (sigma^2 + sigma_d^2) / (sigma sigma_d)^2
double loss_weight(double sigma, double sigma_d = 1.0);

// t_i = t_0 + i dt, dt = (1 - eps_t)/n, t_0 ~ U[eps_t, eps_t + dt].
std::vector<double> stratified_times(const Schedule& sch, std::size_t n, Rng& rng);

// sum_i lambda(sigma_i) |D(x0_i + sigma_i eps_i, sigma_i) - x0_i|^2 for given
// noise levels and noise draws. Recorded on the parameters' tape if tracked.
Tensor denoising_loss(const UNetConfig& cfg, const ParameterSet& params,
                      const std::vector<std::vector<double>>& x0, std::span<const double> sigmas,
                      const std::vector<std::vector<double>>& noise);

// Draws stratified times and Gaussian noise, then evaluates the loss above.
Tensor denoising_loss(const UNetConfig& cfg, const ParameterSet& params,
                      const std::vector<std::vector<double>>& x0, const Schedule& sch, Rng& rng);

struct TrainConfig {
  std::size_t batch = 32;
  std::size_t steps = 20000;
  std::size_t warmup = 1000;
  double peak_lr = 1e-3;
  double final_lr = 1e-6;
  double clip_norm = 1.0;
  double ema_decay = 0.95;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  bool augment = true;  // random circular shift per sample
  std::uint64_t seed = 0;

  void validate() const;  // throws ConfigError
};

// Linear warmup to peak_lr, then cosine decay to final_lr at the last step.
double learning_rate(const TrainConfig& cfg, std::size_t step);

struct TrainStats {
  std::size_t step;
  double loss;
  double lr;
  double grad_norm;
};

// Trains on standardized snapshots (one per row of `data`). The callback, if
// set, sees every step. Throws NumericalError naming the step on a
// non-finite loss.
void train_denoiser(DenoiserModel& model, const SnapshotDataset& data, const Schedule& sch,
                    const TrainConfig& cfg, const std::function<void(const TrainStats&)>& on_step = {});

// grad log p_t(x_t) = (D(x_t/s, sigma) - x_t/s) / (s sigma^2)
std::vector<double> score(const Schedule& sch, const DenoiserFn& denoiser, std::span<const double> x_t, double t);

// Drift and diffusion of the reverse-time SDE in denoiser form:
// dx = [(s'/s + 2 sigma'/sigma) x - (2 s sigma'/sigma) D(x/s, sigma)] dt + s sqrt(2 sigma' sigma) dW
std::vector<double> reverse_drift(const Schedule& sch, const DenoiserFn& denoiser, std::span<const double> x, double t);
double reverse_diffusion(const Schedule& sch, double t);

struct SamplerOptions {
  std::size_t steps = 256;
  bool terminal_denoise = true;
};

// Euler–Maruyama from t = 1 down the exponential sigma grid to sigma(eps_t).
// Returns D(x/s, sigma_min) if terminal_denoise, else x/s.
std::vector<double> sample_reverse_sde(const Schedule& sch, const DenoiserFn& denoiser, std::size_t dim,
                                       const SamplerOptions& opts, Rng& rng);

}  // namespace dsk
