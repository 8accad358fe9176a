#include "dsk/diffusion.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "dsk/errors.hpp"
#include "dsk/ops.hpp"

namespace dsk {

Perturbed perturb(const Schedule& sch, std::span<const double> x0, double t, Rng& rng) {
  if (!(t >= sch.eps_t && t <= 1.0)) throw std::out_of_range("perturb: t outside [eps_t, 1]");
  const double sg = sch.sigma(t), s = sch.s(t);
  Perturbed p{std::vector<double>(x0.size()), std::vector<double>(x0.size())};
  for (std::size_t i = 0; i < x0.size(); ++i) {
    p.noise[i] = rng.normal();
    p.x_t[i] = s * (x0[i] + sg * p.noise[i]);
  }
  return p;
}

double loss_weight(double sigma, double sigma_d) {
  return (sigma * sigma + sigma_d * sigma_d) / ((sigma * sigma_d) * (sigma * sigma_d));
}

std::vector<double> stratified_times(const Schedule& sch, std::size_t n, Rng& rng) {
  if (n == 0) throw std::invalid_argument("stratified_times: n must be positive");
  const double dt = (1.0 - sch.eps_t) / static_cast<double>(n);
  const double t0 = rng.uniform(sch.eps_t, sch.eps_t + dt);
  std::vector<double> ts(n);
  for (std::size_t i = 0; i < n; ++i) ts[i] = std::min(1.0, t0 + static_cast<double>(i) * dt);
  return ts;
}

Tensor denoising_loss(const UNetConfig& cfg, const ParameterSet& params,
                      const std::vector<std::vector<double>>& x0, std::span<const double> sigmas,
                      const std::vector<std::vector<double>>& noise) {
  if (x0.empty()) throw std::invalid_argument("denoising_loss: empty batch");
  if (sigmas.size() != x0.size() || noise.size() != x0.size()) {
    throw std::invalid_argument("denoising_loss: batch, sigma and noise counts differ");
  }
  Tensor total;
  for (std::size_t i = 0; i < x0.size(); ++i) {
    std::vector<double> noisy(x0[i].size());
    for (std::size_t k = 0; k < noisy.size(); ++k) noisy[k] = x0[i][k] + sigmas[i] * noise[i][k];
    const std::size_t n = noisy.size();
    const Tensor d = denoiser_apply(cfg, params, Tensor({n}, std::move(noisy)), sigmas[i]);
    const Tensor err = ops::sub(d, Tensor({x0[i].size()}, x0[i]));
    Tensor term = ops::scale(ops::sum_sq(err), loss_weight(sigmas[i]));
    total = i == 0 ? term : ops::add(total, term);
  }
  return total;
}

Tensor denoising_loss(const UNetConfig& cfg, const ParameterSet& params,
                      const std::vector<std::vector<double>>& x0, const Schedule& sch, Rng& rng) {
  const auto ts = stratified_times(sch, x0.size(), rng);
  std::vector<double> sigmas(ts.size());
  std::vector<std::vector<double>> noise(x0.size());
  for (std::size_t i = 0; i < x0.size(); ++i) {
    sigmas[i] = sch.sigma(ts[i]);
    noise[i].resize(x0[i].size());
    for (double& z : noise[i]) z = rng.normal();
  }
  return denoising_loss(cfg, params, x0, sigmas, noise);
}

void TrainConfig::validate() const {
  if (batch == 0) throw ConfigError("train.batch must be positive");
  if (steps == 0) throw ConfigError("train.steps must be positive");
  if (!(peak_lr > 0) || !(final_lr >= 0)) throw ConfigError("train learning rates must be positive");
  if (!(clip_norm > 0)) throw ConfigError("train.clip_norm must be positive");
  if (!(ema_decay >= 0 && ema_decay < 1)) throw ConfigError("train.ema_decay must lie in [0, 1)");
}

double learning_rate(const TrainConfig& cfg, std::size_t step) {
  if (step < cfg.warmup) {
    return cfg.peak_lr * static_cast<double>(step + 1) / static_cast<double>(cfg.warmup);
  }
  const std::size_t span = cfg.steps > cfg.warmup + 1 ? cfg.steps - cfg.warmup - 1 : 1;
  const double progress = std::min(1.0, static_cast<double>(step - cfg.warmup) / static_cast<double>(span));
  return cfg.final_lr + 0.5 * (cfg.peak_lr - cfg.final_lr) * (1.0 + std::cos(std::numbers::pi * progress));
}

void train_denoiser(DenoiserModel& model, const SnapshotDataset& data, const Schedule& sch,
                    const TrainConfig& cfg, const std::function<void(const TrainStats&)>& on_step) {
  cfg.validate();
  if (data.n_grid != model.cfg.length) {
    throw std::invalid_argument("train_denoiser: data grid " + std::to_string(data.n_grid) +
                                " does not match network length " + std::to_string(model.cfg.length));
  }
  if (data.size() == 0) throw std::invalid_argument("train_denoiser: empty dataset");
  const std::size_t len = data.n_grid;
  Rng rng(cfg.seed);

  std::map<std::string, std::vector<double>> m1, m2, grad;
  for (const auto& [k, v] : model.params) {
    m1[k].assign(v.size(), 0.0);
    m2[k].assign(v.size(), 0.0);
    grad[k].assign(v.size(), 0.0);
  }
  double b1_pow = 1.0, b2_pow = 1.0;

  for (std::size_t step = 0; step < cfg.steps; ++step) {
    std::vector<std::vector<double>> batch(cfg.batch, std::vector<double>(len));
    for (auto& x : batch) {
      const auto src = data.snapshot(rng.below(data.size()));
      const std::size_t shift = cfg.augment ? rng.below(len) : 0;
      for (std::size_t i = 0; i < len; ++i) x[i] = src[(i + shift) % len];
    }
    const auto ts = stratified_times(sch, cfg.batch, rng);

    std::vector<double> sigmas(cfg.batch);
    std::vector<std::vector<double>> noise(cfg.batch, std::vector<double>(len));
    for (std::size_t b = 0; b < cfg.batch; ++b) {
      sigmas[b] = sch.sigma(ts[b]);
      for (double& z : noise[b]) z = rng.normal();
    }
    Tape tape;
    const ParameterSet bound = watch_all(tape, model.params);
    const Tensor l = denoising_loss(model.cfg, bound, batch, sigmas, noise);
    const double loss = l.item();
    const Gradients gr = tape.backward(l);
    for (const auto& [k, v] : bound) grad[k] = gr.dense(v);
    if (!std::isfinite(loss)) {
      throw NumericalError("training loss is not finite at step " + std::to_string(step));
    }

    double sq = 0.0;
    for (const auto& [_, g] : grad) {
      for (double v : g) sq += v * v;
    }
    const double norm = std::sqrt(sq);
    const double clip = norm > cfg.clip_norm ? cfg.clip_norm / norm : 1.0;
    const double lr = learning_rate(cfg, step);
    b1_pow *= cfg.adam_beta1;
    b2_pow *= cfg.adam_beta2;
    for (auto& [k, p] : model.params) {
      auto pv = p.mutable_values();
      auto& g = grad[k];
      auto& a = m1[k];
      auto& v = m2[k];
      auto ev = model.ema[k].mutable_values();
      for (std::size_t i = 0; i < pv.size(); ++i) {
        const double gi = g[i] * clip;
        a[i] = cfg.adam_beta1 * a[i] + (1.0 - cfg.adam_beta1) * gi;
        v[i] = cfg.adam_beta2 * v[i] + (1.0 - cfg.adam_beta2) * gi * gi;
        const double mhat = a[i] / (1.0 - b1_pow);
        const double vhat = v[i] / (1.0 - b2_pow);
        pv[i] -= lr * mhat / (std::sqrt(vhat) + cfg.adam_eps);
        ev[i] = cfg.ema_decay * ev[i] + (1.0 - cfg.ema_decay) * pv[i];
      }
    }
    if (on_step) on_step(TrainStats{step, loss, lr, norm});
  }
}

std::vector<double> score(const Schedule& sch, const DenoiserFn& denoiser, std::span<const double> x_t, double t) {
  if (!(t > 0.0)) throw std::out_of_range("score: singular at t = 0");
  const double s = sch.s(t), sg = sch.sigma(t);
  std::vector<double> x_hat(x_t.size());
  for (std::size_t i = 0; i < x_t.size(); ++i) x_hat[i] = x_t[i] / s;
  const auto d = denoiser(x_hat, sg);
  std::vector<double> out(x_t.size());
  for (std::size_t i = 0; i < x_t.size(); ++i) out[i] = (d[i] - x_hat[i]) / (s * sg * sg);
  return out;
}

std::vector<double> reverse_drift(const Schedule& sch, const DenoiserFn& denoiser, std::span<const double> x, double t) {
  const double s = sch.s(t), sg = sch.sigma(t);
  const double sd = sch.s_dot(t), sgd = sch.sigma_dot(t);
  std::vector<double> x_hat(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) x_hat[i] = x[i] / s;
  const auto d = denoiser(x_hat, sg);
  const double a = sd / s + 2.0 * sgd / sg;
  const double b = 2.0 * s * sgd / sg;
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = a * x[i] - b * d[i];
  return out;
}

double reverse_diffusion(const Schedule& sch, double t) {
  return sch.s(t) * std::sqrt(2.0 * sch.sigma_dot(t) * sch.sigma(t));
}

std::vector<double> sample_reverse_sde(const Schedule& sch, const DenoiserFn& denoiser, std::size_t dim,
                                       const SamplerOptions& opts, Rng& rng) {
  const double smin = sch.sigma_min(), smax = sch.sigma_max();
  const auto ts = exponential_time_grid(sch, opts.steps, smin, smax);
  const double s0 = sch.s(ts[0]), sg0 = sch.sigma(ts[0]);
  std::vector<double> x(dim);
  for (double& v : x) v = s0 * sg0 * rng.normal();

  for (std::size_t i = 0; i + 1 < ts.size(); ++i) {
    const double dt = ts[i + 1] - ts[i];
    const auto drift = reverse_drift(sch, denoiser, x, ts[i]);
    const double g = reverse_diffusion(sch, ts[i]) * std::sqrt(-dt);
    for (std::size_t k = 0; k < dim; ++k) {
      x[k] += drift[k] * dt + g * rng.normal();
      if (!std::isfinite(x[k])) {
        throw NumericalError("sampler state is not finite at step " + std::to_string(i + 1));
      }
    }
  }
  const double t_end = ts.back();
  const double s_end = sch.s(t_end);
  std::vector<double> x_hat(dim);
  for (std::size_t k = 0; k < dim; ++k) x_hat[k] = x[k] / s_end;
  if (!opts.terminal_denoise) return x_hat;
  return denoiser(x_hat, sch.sigma(t_end));
}

}  // namespace dsk
