#include "dsk/conditioning.hpp"

#include <stdexcept>
#include <string>

#include "dsk/ops.hpp"

namespace dsk {

ConstraintSpec ConstraintSpec::from_mask(const ks::SelectionMask& mask, std::vector<double> y_bar_prime,
                                         double alpha_tilde) {
  ConstraintSpec spec{mask.d, mask.indices(), std::move(y_bar_prime), alpha_tilde};
  spec.validate();
  return spec;
}

void ConstraintSpec::validate() const {
  if (y_bar_prime.size() != indices.size()) {
    throw std::invalid_argument("constraint: " + std::to_string(y_bar_prime.size()) + " values for " +
                                std::to_string(indices.size()) + " selected coordinates");
  }
  for (auto i : indices) {
    if (i >= d) throw std::invalid_argument("constraint: index " + std::to_string(i) + " outside dimension " + std::to_string(d));
  }
}

std::vector<double> pseudo_inverse_apply(const ConstraintSpec& spec, std::span<const double> y_prime) {
  if (y_prime.size() != spec.indices.size()) throw std::invalid_argument("pseudo_inverse_apply: size mismatch");
  std::vector<double> out(spec.d, 0.0);
  for (std::size_t i = 0; i < spec.indices.size(); ++i) out[spec.indices[i]] = y_prime[i];
  return out;
}

std::vector<double> constraint_projector(const ConstraintSpec& spec) {
  std::vector<double> diag(spec.d, 0.0);
  for (auto i : spec.indices) diag[i] = 1.0;
  return diag;
}

ConstraintLoss constraint_loss(const UNetConfig& cfg, const ParameterSet& params, const ConstraintSpec& spec,
                               std::span<const double> x_hat, double sigma) {
  if (x_hat.size() != spec.d || spec.d != cfg.length) {
    throw std::invalid_argument("constraint_loss: field length " + std::to_string(x_hat.size()) +
                                " does not match constraint dimension " + std::to_string(spec.d));
  }
  Tape tape;
  const Tensor x = tape.watch(Tensor({x_hat.size()}, std::vector<double>(x_hat.begin(), x_hat.end())));
  const Tensor d = denoiser_apply(cfg, params, x, sigma);
  const Tensor resid = ops::sub(ops::gather(d, spec.indices), Tensor({spec.indices.size()}, spec.y_bar_prime));
  const Tensor loss = ops::sum_sq(resid);
  ConstraintLoss out{loss.item(), d.data(), {}};
  out.grad_x_hat = tape.backward(loss).dense(x);
  return out;
}

std::vector<double> conditioned_denoiser(const UNetConfig& cfg, const ParameterSet& params,
                                         const ConstraintSpec& spec, std::span<const double> x_hat, double sigma) {
  if (spec.indices.empty()) {
    const Tensor x({x_hat.size()}, std::vector<double>(x_hat.begin(), x_hat.end()));
    return denoiser_apply(cfg, params, x, sigma).data();
  }
  const auto cl = constraint_loss(cfg, params, spec, x_hat, sigma);
  const double alpha = spec.alpha();
  std::vector<double> out(spec.d);
  for (std::size_t i = 0; i < spec.d; ++i) out[i] = cl.denoised[i] - alpha * cl.grad_x_hat[i];
  for (std::size_t i = 0; i < spec.indices.size(); ++i) out[spec.indices[i]] = spec.y_bar_prime[i];
  return out;
}

DenoiserFn conditioned_denoiser_fn(const DenoiserModel& model, const ConstraintSpec& spec) {
  return [&model, spec](std::span<const double> x_hat, double sigma) {
    return conditioned_denoiser(model.cfg, model.ema, spec, x_hat, sigma);
  };
}

std::vector<double> downscale(const DenoiserModel& model, const ot::EntropicTransport* transport,
                              const ks::SelectionMask& mask, std::span<const double> y_bar, const Schedule& sch,
                              const SamplerOptions& opts, double alpha_tilde, Rng& rng) {
  std::vector<double> y_prime = transport ? ot::barycentric_map(*transport, y_bar)
                                          : std::vector<double>(y_bar.begin(), y_bar.end());
  for (double& v : y_prime) v /= model.sigma_data;
  const auto spec = ConstraintSpec::from_mask(mask, std::move(y_prime), alpha_tilde);
  auto x = sample_reverse_sde(sch, conditioned_denoiser_fn(model, spec), mask.d, opts, rng);
  for (double& v : x) v *= model.sigma_data;
  return x;
}

}  // namespace dsk
