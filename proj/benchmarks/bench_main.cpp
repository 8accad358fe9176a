#include <benchmark/benchmark.h>

#include <vector>

#include "dsk/diffusion.hpp"
#include "dsk/ks.hpp"
#include "dsk/ops.hpp"
#include "dsk/seed.hpp"
#include "dsk/sinkhorn.hpp"
#include "dsk/unet.hpp"

namespace {

using namespace dsk;

std::vector<double> normals(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

UNetConfig desk_unet() {
  UNetConfig c;
  c.length = 192;
  c.channels = {16, 32, 64};
  c.blocks = 2;
  c.noise_dim = 32;
  c.groups = 8;
  return c;
}

void BM_Conv1d(benchmark::State& state) {
  const auto ch = static_cast<std::size_t>(state.range(0));
  const std::size_t len = 192;
  const Tensor x({ch, len}, normals(ch * len, 1));
  const Tensor w({ch, ch, 3}, normals(ch * ch * 3, 2));
  const Tensor b({ch}, normals(ch, 3));
  for (auto _ : state) benchmark::DoNotOptimize(ops::conv1d_circular(x, w, b));
}
BENCHMARK(BM_Conv1d)->Arg(16)->Arg(64);

void BM_Conv1dBackward(benchmark::State& state) {
  const auto ch = static_cast<std::size_t>(state.range(0));
  const std::size_t len = 192;
  const Tensor x({ch, len}, normals(ch * len, 1));
  const Tensor w({ch, ch, 3}, normals(ch * ch * 3, 2));
  const Tensor b({ch}, normals(ch, 3));
  for (auto _ : state) {
    Tape tape;
    const Tensor wx = tape.watch(x), ww = tape.watch(w), wb = tape.watch(b);
    benchmark::DoNotOptimize(tape.backward(ops::sum_sq(ops::conv1d_circular(wx, ww, wb))));
  }
}
BENCHMARK(BM_Conv1dBackward)->Arg(16)->Arg(64);

void BM_DenoiserForward(benchmark::State& state) {
  const auto cfg = desk_unet();
  const auto model = make_denoiser(cfg, 1);
  const Tensor x({cfg.length}, normals(cfg.length, 4));
  for (auto _ : state) benchmark::DoNotOptimize(denoiser_apply(cfg, model.params, x, 1.3));
}
BENCHMARK(BM_DenoiserForward)->Unit(benchmark::kMillisecond);

void BM_DenoisingLossBackward(benchmark::State& state) {
  const auto cfg = desk_unet();
  const auto model = make_denoiser(cfg, 1);
  const auto batch = static_cast<std::size_t>(state.range(0));
  std::vector<std::vector<double>> x0, noise;
  for (std::size_t i = 0; i < batch; ++i) {
    x0.push_back(normals(cfg.length, 10 + i));
    noise.push_back(normals(cfg.length, 100 + i));
  }
  const std::vector<double> sigmas(batch, 0.7);
  for (auto _ : state) {
    Tape tape;
    const auto bound = watch_all(tape, model.params);
    benchmark::DoNotOptimize(tape.backward(denoising_loss(cfg, bound, x0, sigmas, noise)));
  }
}
BENCHMARK(BM_DenoisingLossBackward)->Arg(1)->Arg(32)->Unit(benchmark::kMillisecond);

// Cost materialization plus range(1) Sinkhorn iterations.
void BM_SinkhornFit(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = normals(n * 24, 5), b = normals(n * 24, 6);
  ot::SinkhornOptions opts;
  opts.max_iters = static_cast<std::size_t>(state.range(1));
  opts.tol = 0.0;
  opts.history_every = 0;
  for (auto _ : state) benchmark::DoNotOptimize(ot::sinkhorn_fit(a, b, 24, opts));
}
BENCHMARK(BM_SinkhornFit)->Args({500, 1})->Args({500, 20})->Args({2000, 1})->Args({2000, 20})->Unit(benchmark::kMillisecond);

void BM_SpectralStep(benchmark::State& state) {
  const auto cfg = ks::default_high_fidelity();
  Rng rng(7);
  ks::SpectralSolver solver(cfg);
  auto modes = solver.to_modes(ks::sample_initial_condition(cfg, rng));
  for (auto _ : state) solver.step(modes);
}
BENCHMARK(BM_SpectralStep);

void BM_FiniteVolumeStep(benchmark::State& state) {
  const auto cfg = ks::default_low_fidelity();
  Rng rng(8);
  ks::FiniteVolumeSolver solver(cfg);
  auto u = ks::sample_initial_condition(cfg, rng);
  for (auto _ : state) solver.step(u);
}
BENCHMARK(BM_FiniteVolumeStep);

}  // namespace

BENCHMARK_MAIN();
