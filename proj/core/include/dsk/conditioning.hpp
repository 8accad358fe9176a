#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dsk/denoiser.hpp"
#include "dsk/diffusion.hpp"
#include "dsk/ks.hpp"
#include "dsk/sinkhorn.hpp"

namespace dsk {

// Linear constraint C'x = y' where C' keeps the coordinates in `indices`.
// For a selection matrix the SVD is structural: U = I, Sigma = I, V = C'^T,
// so the pseudo-inverse is C'^T and V V^T is the indicator of `indices`.
struct ConstraintSpec {
  std::size_t d = 0;
  std::vector<std::size_t> indices;
  std::vector<double> y_bar_prime;  // one value per index
  double alpha_tilde = 1.0;

  static ConstraintSpec from_mask(const ks::SelectionMask& mask, std::vector<double> y_bar_prime,
                                  double alpha_tilde = 1.0);

  // d'/d
  double gamma() const { return d ? static_cast<double>(indices.size()) / static_cast<double>(d) : 0.0; }
  double alpha() const { return alpha_tilde * gamma(); }
  void validate() const;
};

// (C')^dagger y': y' at the selected coordinates, zero elsewhere.
std::vector<double> pseudo_inverse_apply(const ConstraintSpec& spec, std::span<const double> y_prime);
// Diagonal of V V^T.
std::vector<double> constraint_projector(const ConstraintSpec& spec);

// |C' D(x_hat, sigma) - y'|^2 and its gradient with respect to x_hat.
struct ConstraintLoss {
  double value;
  std::vector<double> denoised;
  std::vector<double> grad_x_hat;
};
ConstraintLoss constraint_loss(const UNetConfig& cfg, const ParameterSet& params, const ConstraintSpec& spec,
                               std::span<const double> x_hat, double sigma);

// D~ = (C')^dagger y' + (I - V V^T)[D - alpha grad_x_hat |C'D - y'|^2]
std::vector<double> conditioned_denoiser(const UNetConfig& cfg, const ParameterSet& params,
                                         const ConstraintSpec& spec, std::span<const double> x_hat, double sigma);

// Conditioned denoiser over the model's EMA parameters, for the sampler.
// Keeps a reference to `model`.
DenoiserFn conditioned_denoiser_fn(const DenoiserModel& model, const ConstraintSpec& spec);

// Full downscaling of one coarse field: debias with T (skipped if null),
// standardize, sample the constrained reverse SDE, restore units.
std::vector<double> downscale(const DenoiserModel& model, const ot::EntropicTransport* transport,
                              const ks::SelectionMask& mask, std::span<const double> y_bar, const Schedule& sch,
                              const SamplerOptions& opts, double alpha_tilde, Rng& rng);

}  // namespace dsk
