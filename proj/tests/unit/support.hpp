#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "dsk/seed.hpp"
#include "dsk/tensor.hpp"

namespace dsk::testing {

inline std::vector<double> random_values(std::size_t n, Rng& rng, double scale = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = scale * rng.normal();
  return v;
}

inline Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  const std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), random_values(n, rng, scale));
}

// Largest mismatch between reverse-mode and central-difference gradients,
// relative to max(1, |fd|), over `probes` coordinates of each input.
struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t probes = 0;
};

inline GradCheck check_gradients(const std::function<Tensor(const std::vector<Tensor>&)>& f,
                                 const std::vector<Tensor>& inputs, std::size_t probes, Rng& rng,
                                 double h = 1e-6) {
  Tape tape;
  std::vector<Tensor> watched;
  for (const auto& t : inputs) watched.push_back(tape.watch(t.detached()));
  const Tensor loss = f(watched);
  const Gradients grads = tape.backward(loss);

  GradCheck out;
  for (std::size_t which = 0; which < inputs.size(); ++which) {
    const auto analytic = grads.dense(watched[which]);
    for (std::size_t p = 0; p < probes; ++p) {
      const std::size_t i = rng.below(inputs[which].size());
      auto eval = [&](double delta) {
        std::vector<Tensor> moved;
        for (const auto& t : inputs) moved.push_back(t.detached());
        moved[which].mutable_values()[i] += delta;
        return f(moved).item();
      };
      const double fd = (eval(h) - eval(-h)) / (2.0 * h);
      const double err = std::abs(fd - analytic[i]) / std::max(1.0, std::abs(fd));
      out.max_rel_error = std::max(out.max_rel_error, err);
      ++out.probes;
    }
  }
  return out;
}

}  // namespace dsk::testing
