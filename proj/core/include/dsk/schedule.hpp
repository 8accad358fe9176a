#pragma once

#include <cstddef>
#include <vector>

namespace dsk {

// Variance-preserving schedule: sigma(t) = sqrt(exp(beta_d t^2/2 + beta_min t) - 1),
// s(t) = 1/sqrt(sigma(t)^2 + 1).
struct Schedule {
  double beta_d = 19.9;
  double beta_min = 0.1;
  double eps_t = 1e-3;

  double sigma(double t) const;
  double s(double t) const;
  double sigma_dot(double t) const;
  double s_dot(double t) const;
  double t_of_sigma(double sigma) const;

  double sigma_min() const { return sigma(eps_t); }
  double sigma_max() const { return sigma(1.0); }
};

// t_i = t_of_sigma(sigma_max (sigma_min/sigma_max)^(i/N)), i = 0..N.
std::vector<double> exponential_time_grid(const Schedule& sch, std::size_t n, double sigma_min,
                                          double sigma_max);

}  // namespace dsk
