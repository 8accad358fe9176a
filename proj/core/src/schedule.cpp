#include "dsk/schedule.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace dsk {
namespace {

void check_t(double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw std::out_of_range("schedule: t=" + std::to_string(t) + " outside [0, 1]");
}

}  // namespace

double Schedule::sigma(double t) const {
  check_t(t);
  return std::sqrt(std::expm1(0.5 * beta_d * t * t + beta_min * t));
}

double Schedule::s(double t) const {
  const double sg = sigma(t);
  return 1.0 / std::sqrt(sg * sg + 1.0);
}

double Schedule::sigma_dot(double t) const {
  const double sg = sigma(t);
  if (sg == 0.0) throw std::out_of_range("schedule: sigma_dot is singular at t=0");
  const double phi = 0.5 * beta_d * t * t + beta_min * t;
  return (beta_d * t + beta_min) * std::exp(phi) / (2.0 * sg);
}

double Schedule::s_dot(double t) const { return -0.5 * (beta_d * t + beta_min) * s(t); }

double Schedule::t_of_sigma(double sg) const {
  if (!(sg >= 0.0)) throw std::out_of_range("schedule: sigma must be non-negative");
  const double c = std::log1p(sg * sg);
  // Positive root of beta_d/2 t^2 + beta_min t - c = 0, written to avoid cancellation.
  const double t = 2.0 * c / (beta_min + std::sqrt(beta_min * beta_min + 2.0 * beta_d * c));
  if (t > 1.0) {
    if (t - 1.0 > 1e-12) throw std::out_of_range("schedule: sigma=" + std::to_string(sg) + " beyond sigma(1)");
    return 1.0;
  }
  return t;
}

std::vector<double> exponential_time_grid(const Schedule& sch, std::size_t n, double sigma_min,
                                          double sigma_max) {
  if (n < 1) throw std::invalid_argument("exponential_time_grid: need at least one step");
  if (!(sigma_min > 0.0 && sigma_min < sigma_max)) {
    throw std::invalid_argument("exponential_time_grid: need 0 < sigma_min < sigma_max");
  }
  std::vector<double> ts(n + 1);
  const double ratio = sigma_min / sigma_max;
  for (std::size_t i = 0; i <= n; ++i) {
    const double sg = i == n ? sigma_min : sigma_max * std::pow(ratio, static_cast<double>(i) / static_cast<double>(n));
    ts[i] = sch.t_of_sigma(sg);
  }
  return ts;
}

}  // namespace dsk
