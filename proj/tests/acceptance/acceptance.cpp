// Acceptance driver: `dsk_acceptance --criterion N` checks one criterion and
// prints a single PASS/FAIL line. Exit status 0 on pass, 1 on fail.
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "dsk/baselines.hpp"
#include "dsk/binary_io.hpp"
#include "dsk/conditioning.hpp"
#include "dsk/config.hpp"
#include "dsk/denoiser.hpp"
#include "dsk/diffusion.hpp"
#include "dsk/ks.hpp"
#include "dsk/metrics.hpp"
#include "dsk/pipeline.hpp"
#include "dsk/schedule.hpp"
#include "dsk/seed.hpp"
#include "dsk/sinkhorn.hpp"

using namespace dsk;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Options {
  fs::path work;
  fs::path desk_config;
  fs::path smoke_config;
  fs::path cli;
};

struct Outcome {
  bool pass;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::vector<double> normals(std::size_t n, Rng& rng, double mean = 0.0, double sd = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = mean + sd * rng.normal();
  return v;
}

ParameterSet randomized(const ParameterSet& p, Rng& rng) {
  ParameterSet out;
  for (const auto& [k, v] : p) out.emplace(k, Tensor(v.shape(), normals(v.size(), rng, 0.0, 0.3)));
  return out;
}

double rel_err(double fd, double an) {
  return std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-8});
}

Outcome autodiff() {
  const auto cfg = tiny_unet_config();
  Rng rng(101);
  const auto params = randomized(make_denoiser(cfg, 101).params, rng);
  const std::vector<std::vector<double>> x0 = {normals(16, rng), normals(16, rng)};
  const std::vector<std::vector<double>> noise = {normals(16, rng), normals(16, rng)};
  const std::vector<double> sigmas = {0.5, 3.0};

  Tape tape;
  const auto bound = watch_all(tape, params);
  const auto grads = tape.backward(denoising_loss(cfg, bound, x0, sigmas, noise));
  std::vector<std::string> names;
  for (const auto& [k, _] : params) names.push_back(k);
  double worst_param = 0.0;
  for (int probe = 0; probe < 20; ++probe) {
    const auto& name = names[rng.below(names.size())];
    const std::size_t i = rng.below(params.at(name).size());
    auto eval = [&](double h) {
      auto p = params;
      p.at(name).mutable_values()[i] += h;
      return denoising_loss(cfg, p, x0, sigmas, noise).item();
    };
    const double fd = (eval(1e-5) - eval(-1e-5)) / 2e-5;
    worst_param = std::max(worst_param, rel_err(fd, grads.dense(bound.at(name))[i]));
  }

  const auto spec = ConstraintSpec::from_mask(ks::SelectionMask::make(16, 4), normals(4, rng));
  const auto x = normals(16, rng);
  const double sigma = 0.8;
  const auto cl = constraint_loss(cfg, params, spec, x, sigma);
  double worst_input = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    auto eval = [&](double h) {
      auto xp = x;
      xp[i] += h;
      return constraint_loss(cfg, params, spec, xp, sigma).value;
    };
    const double fd = (eval(1e-6) - eval(-1e-6)) / 2e-6;
    worst_input = std::max(worst_input, rel_err(fd, cl.grad_x_hat[i]));
  }
  return {worst_param < 1e-4 && worst_input < 1e-5,
          "parameter gradient max rel err " + fmt("%.2e", worst_param) + " (< 1e-4, 20 probes), input gradient " +
              fmt("%.2e", worst_input) + " (< 1e-5, 16 coordinates)"};
}

Outcome schedule_identities() {
  const Schedule sch;
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double t = static_cast<double>(i) / 999.0;
    const double sg = sch.sigma(t);
    worst = std::max(worst, std::abs(sch.s(t) - 1.0 / std::sqrt(sg * sg + 1.0)));
  }
  const double closed = std::sqrt(std::expm1(0.5 * 19.9 + 0.1));
  const double s1 = sch.sigma(1.0);
  const bool pass = sch.sigma(0.0) == 0.0 && worst < 1e-14 && std::abs(s1 - closed) < 1e-9;
  return {pass, "sigma(0) = " + fmt("%g", sch.sigma(0.0)) + ", max |s - 1/sqrt(sigma^2+1)| " + fmt("%.1e", worst) +
                    " (< 1e-14), sigma(1) = " + fmt("%.9f", s1) + " vs closed form " + fmt("%.9f", closed) +
                    " (|diff| < 1e-9)"};
}

// Relative Frobenius distance of the sample covariance from the identity.
double identity_cov_error(const std::vector<double>& xs, std::size_t n, std::size_t d, std::vector<double>& mean) {
  mean.assign(d, 0.0);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t k = 0; k < d; ++k) mean[k] += xs[s * d + k] / static_cast<double>(n);
  }
  double sq = 0.0;
  for (std::size_t a = 0; a < d; ++a) {
    for (std::size_t b = 0; b < d; ++b) {
      double c = 0.0;
      for (std::size_t s = 0; s < n; ++s) c += (xs[s * d + a] - mean[a]) * (xs[s * d + b] - mean[b]);
      c /= static_cast<double>(n);
      const double e = c - (a == b ? 1.0 : 0.0);
      sq += e * e;
    }
  }
  return std::sqrt(sq / static_cast<double>(d));
}

Outcome sampler_oracle() {
  const Schedule sch;
  const DenoiserFn exact = [](std::span<const double> x, double sigma) {
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] / (1.0 + sigma * sigma);
    return out;
  };
  const std::size_t n = 10000, d = 24;
  SamplerOptions opts;
  opts.steps = 256;
  Rng rng(derive_seed(2024, "acceptance-sampler"));
  std::vector<double> xs;
  xs.reserve(n * d);
  for (std::size_t s = 0; s < n; ++s) {
    const auto x = sample_reverse_sde(sch, exact, d, opts, rng);
    xs.insert(xs.end(), x.begin(), x.end());
  }
  std::vector<double> mean;
  const double cov_err = identity_cov_error(xs, n, d, mean);
  double worst_mean = 0.0;
  for (double m : mean) worst_mean = std::max(worst_mean, std::abs(m));

  // The same statistic for exact i.i.d. draws from the target, for scale.
  const auto iid = normals(n * d, rng);
  std::vector<double> iid_mean;
  const double iid_err = identity_cov_error(iid, n, d, iid_mean);

  const double mean_tol = 3.0 / std::sqrt(static_cast<double>(n));
  return {worst_mean < mean_tol && cov_err < 0.05,
          "max |mean| " + fmt("%.4f", worst_mean) + " (< " + fmt("%.2f", mean_tol) + "), covariance rel err " +
              fmt("%.4f", cov_err) + " (< 0.05); i.i.d. target draws give " + fmt("%.4f", iid_err)};
}

Outcome sinkhorn_marginals() {
  const std::size_t n = 500, d = 2;
  Rng rng(404);
  std::vector<double> a(n * d), b(n * d);
  for (double& v : a) v = rng.uniform(0.0, 1.0);
  for (double& v : b) v = 0.5 + 0.3 * rng.normal();
  ot::SinkhornOptions opts;
  opts.epsilon = 0.05;
  opts.tol = 1e-12;
  opts.max_iters = 20000;
  const auto ab = ot::sinkhorn_fit(a, b, d, opts);
  const auto ba = ot::sinkhorn_fit(b, a, d, opts);

  const auto p = ab.plan_matrix();
  std::vector<double> rows(n, 0.0), cols(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      rows[i] += p[i * n + j];
      cols[j] += p[i * n + j];
    }
  }
  double l1 = 0.0;
  for (std::size_t i = 0; i < n; ++i) l1 += std::abs(rows[i] - 1.0 / n) + std::abs(cols[i] - 1.0 / n);
  double sym = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) sym = std::max(sym, std::abs(p[i * n + j] - ba.plan(j, i)));
  }
  return {l1 < 1e-6 && sym < 1e-10,
          "eps 0.05, " + std::to_string(ab.iterations_run) + " iterations: marginal L1 violation " + fmt("%.2e", l1) +
              " (< 1e-6), max |P - P_swapped^T| " + fmt("%.2e", sym) + " (< 1e-10)"};
}

// Max error over y in [-1.5, 1.5] of `map` against `exact`.
double map_error(const std::function<double(double)>& map, const std::function<double(double)>& exact) {
  double worst = 0.0;
  for (int k = 0; k <= 60; ++k) {
    const double y = -1.5 + 0.05 * k;
    worst = std::max(worst, std::abs(map(y) - exact(y)));
  }
  return worst;
}

// Exact OT map between the two empirical measures in 1D: monotone
// rearrangement, extended to any y by its rank among the source samples.
std::function<double(double)> sorted_matching(std::vector<double> src, std::vector<double> tgt) {
  std::sort(src.begin(), src.end());
  std::sort(tgt.begin(), tgt.end());
  return [src = std::move(src), tgt = std::move(tgt)](double y) {
    const auto r = static_cast<std::size_t>(std::lower_bound(src.begin(), src.end(), y) - src.begin());
    return tgt[std::min(r, tgt.size() - 1)];
  };
}

Outcome barycentric_oracle() {
  Rng rng(505);
  const auto src = normals(2000, rng);
  const auto tgt = normals(2000, rng, 2.0, 2.0);
  ot::SinkhornOptions opts;
  opts.epsilon = 0.01;
  opts.max_iters = 5000;
  const auto t = ot::sinkhorn_fit(src, tgt, 1, opts);
  const auto bary = [&t](double y) { return ot::barycentric_map(t, std::vector<double>{y})[0]; };
  const auto affine = [](double y) { return 2.0 + 2.0 * y; };
  const double err = map_error(bary, affine);
  const auto empirical = sorted_matching(src, tgt);
  const double floor = map_error(empirical, affine);
  const double to_empirical = map_error(bary, empirical);

  const double c = 1.5;
  auto shifted = src;
  for (double& v : shifted) v += c;
  const auto ts = ot::sinkhorn_fit(src, shifted, 1, opts);
  const double shift =
      map_error([&ts](double y) { return ot::barycentric_map(ts, std::vector<double>{y})[0]; },
                [c](double y) { return y + c; });
  return {err < 0.15 && shift < 0.1,
          "N(0,1) -> N(2,4), 2000 samples: max |T(y) - (2 + 2y)| on [-1.5, 1.5] " + fmt("%.4f", err) +
              " (< 0.15); shift by 1.5: " + fmt("%.4f", shift) +
              " (< 0.1); for reference the exact empirical OT map deviates from 2 + 2y by " + fmt("%.4f", floor) +
              " and T deviates from it by " + fmt("%.4f", to_empirical)};
}

Outcome pde_checks() {
  const ks::Config hf = ks::default_high_fidelity();
  const double t_end = 10.0;
  const auto steps = static_cast<std::size_t>(std::llround(t_end / hf.dt));
  double worst_mode = 0.0;
  for (std::size_t m : {1u, 2u, 3u, 5u, 8u}) {
    ks::SpectralSolver solver(hf, false);
    std::vector<double> u(hf.n_grid);
    for (std::size_t i = 0; i < hf.n_grid; ++i) {
      u[i] = std::sin(2.0 * std::numbers::pi * static_cast<double>(m * i) / static_cast<double>(hf.n_grid));
    }
    const auto out = solver.advance(u, steps);
    const double k = 2.0 * std::numbers::pi * static_cast<double>(m) / hf.L;
    const double growth = std::exp((hf.nu * k * k - hf.nu * k * k * k * k) * t_end);
    for (std::size_t i = 0; i < hf.n_grid; ++i) worst_mode = std::max(worst_mode, std::abs(out[i] - growth * u[i]) / growth);
  }

  const ks::Config lf = ks::default_low_fidelity();
  Rng rng(606);
  auto u = ks::sample_initial_condition(lf, rng);
  ks::FiniteVolumeSolver fv(lf);
  double worst_mass = 0.0;
  for (int s = 0; s < 4000; ++s) {
    double before = 0.0, after = 0.0;
    for (double v : u) before += v;
    fv.step(u);
    for (double v : u) after += v;
    worst_mass = std::max(worst_mass, std::abs(after - before));
  }

  bool zero = true;
  for (const auto& cfg : {hf, lf}) {
    const std::vector<double> z(cfg.n_grid, 0.0);
    ks::SpectralSolver spectral(cfg);
    ks::FiniteVolumeSolver finite(cfg);
    for (double v : spectral.advance(z, 1000)) zero = zero && v == 0.0;
    for (double v : finite.advance(z, 1000)) zero = zero && v == 0.0;
  }
  return {worst_mode < 1e-6 && worst_mass < 1e-10 && zero,
          "linear modes max rel err " + fmt("%.2e", worst_mode) + " (< 1e-6), FV mass change per step " +
              fmt("%.2e", worst_mass) + " (< 1e-10), zero IC stays zero: " + (zero ? "yes" : "no")};
}

Outcome metric_consistency() {
  Rng rng(1010);
  const std::size_t d = 24, n = 400;
  std::vector<double> a(n * d);
  for (std::size_t s = 0; s < n; ++s) {
    // Smooth periodic fields so that every spectral mode carries energy.
    for (std::size_t k = 1; k <= d / 2; ++k) {
      const double amp = rng.normal() / static_cast<double>(k), ph = rng.uniform(0.0, 2.0 * std::numbers::pi);
      for (std::size_t i = 0; i < d; ++i) {
        a[s * d + i] += amp * std::cos(2.0 * std::numbers::pi * static_cast<double>(k * i) / d + ph);
      }
    }
  }
  const auto e = metrics::mean_energy_spectrum(a, d);
  const auto bw = metrics::median_bandwidths(a, a, d);
  const std::map<std::string, double> self = {
      {"covRMSE", metrics::cov_rmse(a, a, d)},
      {"MELRu", metrics::melr(e, e, false).value},
      {"MELRw", metrics::melr(e, e, true).value},
      {"KLD", metrics::kde_kld(a, a, d)},
      {"Wass1", metrics::wass1(a, a, d)},
      {"MMD", metrics::mmd(a, a, d, bw)},
      {"sMAPE", metrics::smape(a, a)},
  };
  bool pass = true;
  std::string detail = "identical sets:";
  for (const auto& [name, v] : self) {
    pass = pass && v < 1e-8;
    detail += " " + name + " " + fmt("%.2g", v);
  }
  const double mmd_bound = 2.0 / static_cast<double>(n);
  pass = pass && std::abs(self.at("MMD")) < mmd_bound;
  detail += " (each < 1e-8; |MMD| < 2/n)";

  const auto p = normals(20000, rng), r1 = normals(20000, rng, 1.0), r2 = normals(20000, rng, 2.0);
  const double kld = metrics::kde_kld(p, r1, 1);
  const double w1 = metrics::wass1(p, r2, 1);
  pass = pass && std::abs(kld - 0.5) <= 0.1 && std::abs(w1 - 2.0) <= 0.1;
  detail += "; KLD(N(0,1), N(1,1)) " + fmt("%.4f", kld) + " (0.5 +- 0.1), Wass1(N(0,1), N(2,1)) " + fmt("%.4f", w1) +
            " (2.0 +- 0.1)";
  return {pass, detail};
}

Outcome bcsd_property() {
  Rng rng(1111);
  const std::size_t n = 20000;
  const auto src = normals(n, rng), ref = normals(n, rng, 2.0, 2.0);
  const auto test = normals(n, rng), target = normals(n, rng, 2.0, 2.0);
  const auto qt = baselines::fit_quantile_table(src, ref, 1, 1000);
  std::vector<double> mapped;
  mapped.reserve(n);
  for (double x : test) mapped.push_back(baselines::quantile_match(std::vector<double>{x}, qt)[0]);
  const double before = metrics::wass1(test, target, 1);
  const double after = metrics::wass1(mapped, target, 1);
  return {after < 0.05, "N(0,1) -> N(2,4): Wass1 " + fmt("%.4f", before) + " before, " + fmt("%.4f", after) +
                            " after quantile matching (< 0.05)"};
}

// ---- desk-scale runs, cached under work/<config hash> ----

class DeskRun {
 public:
  explicit DeskRun(const Options& o) {
    auto cfg = load_config(o.desk_config);
    const auto hash = config_hash(cfg);
    ctx_ = pipeline::make_context(std::move(cfg), o.work / ("desk-" + hash), 1);
    fs::create_directories(ctx_.out);
  }

  const pipeline::Context& ctx() const { return ctx_; }

  void ensure(const std::string& stage) {
    static const std::vector<std::pair<std::string, void (*)(const pipeline::Context&)>> kStages = {
        {"gen-data", pipeline::gen_data}, {"fit-ot", pipeline::fit_ot},     {"baseline", pipeline::baseline},
        {"train", pipeline::train},       {"sample", pipeline::sample},     {"evaluate", pipeline::evaluate}};
    for (const auto& [name, fn] : kStages) {
      const auto stamp = ctx_.out / (name + ".done");
      if (!fs::exists(stamp) || io::read_file(stamp) != ctx_.hash) {
        spdlog::info("acceptance: running stage {} in {}", name, ctx_.out.string());
        fn(ctx_);
        io::write_file(stamp, ctx_.hash);
      }
      if (name == stage) return;
    }
  }

  json metrics(const std::string& slug) const {
    return json::parse(io::read_file(ctx_.out / ("metrics_" + slug + ".json")));
  }

 private:
  pipeline::Context ctx_;
};

Outcome constraint_satisfaction(const Options& o) {
  DeskRun run(o);
  run.ensure("evaluate");
  const double raw = run.metrics("raw_cdfn")["constraintRMSE"].get<double>();
  const double ot = run.metrics("ot_cdfn")["constraintRMSE"].get<double>();
  return {raw <= 1e-3 && ot <= 1e-3,
          "constraint RMSE Raw+cDfn " + fmt("%.2e", raw) + ", OT+cDfn " + fmt("%.2e", ot) + " (<= 1e-3)"};
}

Outcome ot_trend(const Options& o) {
  DeskRun run(o);
  run.ensure("baseline");
  const auto& ctx = run.ctx();
  const std::size_t n = ctx.cfg.ot.n_samples;
  const auto y = load_dataset(ctx.out / pipeline::artifact::kLfCoarse);
  const auto yp = load_dataset(ctx.out / pipeline::artifact::kHfCoarse);
  const auto held = y.slice(n, y.size());
  const auto ref = yp.slice(n, yp.size());
  const auto ot_lr = load_dataset(ctx.out / pipeline::artifact::kOtCoarse);
  const auto lflr = json::parse(pipeline::metrics_json(ctx, "LFLR", held, ref, &held, 1, &held));
  const auto otm = json::parse(pipeline::metrics_json(ctx, "OT", ot_lr, ref, &ot_lr, 1, &held));
  bool pass = true;
  std::string detail = std::to_string(n) + " OT samples, eps " + fmt("%g", ctx.cfg.ot.epsilon) + ":";
  for (const char* k : {"covRMSE", "MELRu", "KLD"}) {
    const double before = lflr[k].get<double>(), after = otm[k].get<double>();
    const double factor = before / after;
    pass = pass && factor >= 2.0;
    detail += std::string(" ") + k + " " + fmt("%.4g", before) + " -> " + fmt("%.4g", after) + " (x" +
              fmt("%.2f", factor) + ")";
  }
  detail += " (each factor >= 2)";
  return {pass, detail};
}

Outcome conditioning_trend(const Options& o) {
  DeskRun run(o);
  run.ensure("evaluate");
  const auto raw = run.metrics("raw_cdfn"), ot = run.metrics("ot_cdfn");
  const double mr = raw["MELRw"].get<double>(), mo = ot["MELRw"].get<double>();
  const double kr = raw["KLD"].get<double>(), ko = ot["KLD"].get<double>();
  return {mo < mr && ko < kr, std::to_string(run.ctx().cfg.train.steps) + " training steps: MELRw OT+cDfn " +
                                  fmt("%.4g", mo) + " vs Raw+cDfn " + fmt("%.4g", mr) + ", KLD OT+cDfn " +
                                  fmt("%.4g", ko) + " vs Raw+cDfn " + fmt("%.4g", kr) + " (OT+cDfn lower in both)"};
}

Outcome determinism(const Options& o) {
  const auto root = o.work / "determinism";
  fs::remove_all(root);
  const std::vector<std::string> stages = {"gen-data", "fit-ot", "train-denoiser", "sample"};
  for (const char* run : {"a", "b"}) {
    for (const auto& stage : stages) {
      const std::string cmd = "\"" + o.cli.string() + "\" " + stage + " --config \"" + o.smoke_config.string() +
                              "\" --out \"" + (root / run).string() + "\"";
      if (std::system(cmd.c_str()) != 0) return {false, "command failed: " + cmd};
    }
  }
  std::size_t compared = 0;
  std::vector<std::string> differing;
  for (const auto& entry : fs::directory_iterator(root / "a")) {
    const auto name = entry.path().filename();
    const auto other = root / "b" / name;
    ++compared;
    if (!fs::exists(other) || io::read_file(entry.path()) != io::read_file(other)) differing.push_back(name.string());
  }
  std::string detail = std::to_string(compared) + " artifacts from gen-data, fit-ot, train-denoiser, sample compared";
  if (!differing.empty()) {
    detail += "; differing:";
    for (const auto& d : differing) detail += " " + d;
  } else {
    detail += ", all byte-identical";
  }
  return {differing.empty() && compared > 0, detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dsk acceptance checks"};
  int criterion = 0;
  Options o;
  o.work = "acceptance-work";
  app.add_option("--criterion", criterion, "criterion number (1-12)")->required()->check(CLI::Range(1, 12));
  app.add_option("--work", o.work, "directory for cached runs");
  app.add_option("--desk-config", o.desk_config)->required();
  app.add_option("--smoke-config", o.smoke_config)->required();
  app.add_option("--cli", o.cli, "path to the dsk executable")->required();
  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(spdlog::level::warn);
  if (const char* lvl = std::getenv("DSK_LOG")) spdlog::set_level(spdlog::level::from_str(lvl));

  const std::map<int, std::pair<std::string, std::function<Outcome()>>> criteria = {
      {1, {"autodiff correctness", autodiff}},
      {2, {"schedule identities", schedule_identities}},
      {3, {"sampler vs Gaussian oracle", sampler_oracle}},
      {4, {"Sinkhorn marginals and symmetry", sinkhorn_marginals}},
      {5, {"barycentric map oracle", barycentric_oracle}},
      {6, {"PDE solver checks", pde_checks}},
      {7, {"constraint satisfaction", [&] { return constraint_satisfaction(o); }}},
      {8, {"OT debiasing trend", [&] { return ot_trend(o); }}},
      {9, {"conditioning trend", [&] { return conditioning_trend(o); }}},
      {10, {"metric self-consistency", metric_consistency}},
      {11, {"BCSD quantile matching", bcsd_property}},
      {12, {"determinism", [&] { return determinism(o); }}},
  };
  const auto& [name, fn] = criteria.at(criterion);
  Outcome out{false, ""};
  try {
    out = fn();
  } catch (const std::exception& e) {
    out = {false, std::string("error: ") + e.what()};
  }
  std::printf("criterion %2d %s: %s: %s\n", criterion, out.pass ? "PASS" : "FAIL", name.c_str(), out.detail.c_str());
  return out.pass ? 0 : 1;
}
