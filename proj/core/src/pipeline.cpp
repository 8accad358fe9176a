#include "dsk/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cstdio>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "dsk/baselines.hpp"
#include "dsk/binary_io.hpp"
#include "dsk/conditioning.hpp"
#include "dsk/denoiser.hpp"
#include "dsk/diffusion.hpp"
#include "dsk/errors.hpp"
#include "dsk/metrics.hpp"
#include "dsk/sinkhorn.hpp"
#include "dsk/version.hpp"

namespace dsk::pipeline {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

json base_meta(const Context& ctx, const char* stage) {
  return {{"stage", stage},
          {"config_hash", ctx.hash},
          {"seed", ctx.cfg.seed},
          {"git_describe", git_describe()}};
}

std::string with_meta(const std::string& existing, const json& extra) {
  json m = existing.empty() ? json::object() : json::parse(existing);
  for (const auto& [k, v] : extra.items()) m[k] = v;
  return m.dump();
}

void write_sidecar(const fs::path& artifact_path, const json& meta) {
  auto side = artifact_path;
  side += ".meta.json";
  io::write_file(side, meta.dump(2) + "\n");
}

SnapshotDataset load(const Context& ctx, const char* name) { return load_dataset(require_artifact(ctx, name)); }

void save(const Context& ctx, const char* name, SnapshotDataset ds, const json& extra) {
  ds.metadata = with_meta(ds.metadata, extra);
  save_dataset(ctx.out / name, ds);
  spdlog::info("wrote {} ({} x {})", (ctx.out / name).string(), ds.size(), ds.n_grid);
}

// Runs fn(i) for i in [0, n) on up to `threads` workers; results must be
// written to disjoint locations so the outcome does not depend on scheduling.
template <typename Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
  const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(threads, n));
  std::vector<std::exception_ptr> errors(workers);
  auto work = [&](std::size_t w) {
    try {
      for (std::size_t i = w; i < n; i += workers) fn(i);
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
}

double global_std(const SnapshotDataset& ds) {
  double mean = 0.0;
  for (double v : ds.values) mean += v;
  mean /= static_cast<double>(ds.values.size());
  double ss = 0.0;
  for (double v : ds.values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(ds.values.size()));
}

// Held-out validation batch with fixed noise levels and draws.
struct ValidationBatch {
  std::vector<std::vector<double>> x0;
  std::vector<double> sigmas;
  std::vector<std::vector<double>> noise;
};

ValidationBatch validation_batch(const SnapshotDataset& held_out, double sigma_data, const Schedule& sch,
                                 std::uint64_t seed, std::size_t count) {
  Rng rng(seed);
  ValidationBatch v;
  count = std::min(count, held_out.size());
  const auto ts = stratified_times(sch, count, rng);
  for (std::size_t i = 0; i < count; ++i) {
    const auto s = held_out.snapshot(i * held_out.size() / count);
    std::vector<double> x(s.begin(), s.end());
    for (double& e : x) e /= sigma_data;
    v.x0.push_back(std::move(x));
    v.sigmas.push_back(sch.sigma(ts[i]));
    std::vector<double> z(held_out.n_grid);
    for (double& e : z) e = rng.normal();
    v.noise.push_back(std::move(z));
  }
  return v;
}

}  // namespace

Context make_context(RunConfig cfg, fs::path out, unsigned threads) {
  Context ctx;
  ctx.hash = config_hash(cfg);
  ctx.cfg = std::move(cfg);
  ctx.out = std::move(out);
  ctx.threads = std::max(1u, threads);
  return ctx;
}

fs::path require_artifact(const Context& ctx, const std::string& name) {
  const auto p = ctx.out / name;
  if (!fs::exists(p)) throw MissingArtifact("missing artifact: expected " + p.string());
  return p;
}

void gen_data(const Context& ctx) {
  const auto& c = ctx.cfg;
  ks::Config hf = c.hf, lf = c.lf;
  hf.seed = derive_seed(c.seed, "gen-data-hf");
  lf.seed = derive_seed(c.seed, "gen-data-lf");
  const json meta = base_meta(ctx, "gen-data");

  spdlog::info("simulating {} high-fidelity trajectories (n_grid={}, dt={})", hf.n_trajectories, hf.n_grid, hf.dt);
  const auto hf_ds = ks::simulate(hf, ks::Fidelity::kHigh, ctx.threads);
  spdlog::info("simulating {} low-fidelity trajectories (n_grid={}, dt={})", lf.n_trajectories, lf.n_grid, lf.dt);
  const auto lf_ds = ks::simulate(lf, ks::Fidelity::kLow, ctx.threads);

  save(ctx, artifact::kHf, hf_ds, meta);
  save(ctx, artifact::kLf, lf_ds, meta);
  save(ctx, artifact::kHfCoarse, ks::apply_selection(hf_ds, c.mask()), meta);
  save(ctx, artifact::kLfCoarse, ks::lf_to_y(lf_ds, c.d_prime), meta);
}

void fit_ot(const Context& ctx) {
  const auto& c = ctx.cfg;
  const auto y = load(ctx, artifact::kLfCoarse);
  const auto yp = load(ctx, artifact::kHfCoarse);
  const std::size_t n = c.ot.n_samples;
  if (y.size() < n || yp.size() < n) throw ConfigError("ot.n_samples exceeds the generated snapshot count");
  ot::SinkhornOptions opts;
  opts.epsilon = c.ot.epsilon;
  opts.max_iters = c.ot.max_iters;
  opts.tol = c.ot.tol;
  opts.threads = ctx.threads;
  spdlog::info("fitting entropic OT: {} x {} samples, eps={}", n, n, opts.epsilon);
  const auto src = y.slice(0, n), tgt = yp.slice(0, n);
  const auto t = ot::sinkhorn_fit(src.values, tgt.values, y.n_grid, opts);
  spdlog::info("sinkhorn stopped after {} iterations, marginal error {:.3e}", t.iterations_run, t.marginal_error);
  const auto path = ctx.out / artifact::kTransport;
  ot::save_transport(path, t);
  json meta = base_meta(ctx, "fit-ot");
  meta["config"] = json::parse(canonical_json(c))["ot"];
  meta["iterations"] = t.iterations_run;
  meta["marginal_error"] = t.marginal_error;
  meta["error_history"] = t.error_history;
  write_sidecar(path, meta);
}

void train(const Context& ctx) {
  const auto& c = ctx.cfg;
  const auto hf = load(ctx, artifact::kHf);
  const std::size_t n = c.ot.n_samples;
  auto data = hf.slice(0, n);
  const double sigma_data = global_std(data);
  for (double& v : data.values) v /= sigma_data;

  DenoiserModel model = make_denoiser(c.unet, derive_seed(c.seed, "denoiser-init"), sigma_data);
  TrainConfig tc = c.train;
  tc.seed = derive_seed(c.seed, "train");
  const Schedule sch;
  const auto val = validation_batch(hf.slice(n, hf.size()), sigma_data, sch, derive_seed(c.seed, "validation"), 64);
  const double val_initial = denoising_loss(model.cfg, model.ema, val.x0, val.sigmas, val.noise).item();
  spdlog::info("training denoiser: {} parameters, {} steps of batch {}, sigma_data={:.4f}", parameter_count(model.params),
               tc.steps, tc.batch, sigma_data);

  std::ostringstream log;
  log << "step,loss,lr,grad_norm\n";
  log.precision(10);
  train_denoiser(model, data, sch, tc, [&](const TrainStats& s) {
    log << s.step << ',' << s.loss << ',' << s.lr << ',' << s.grad_norm << '\n';
    if (s.step % 100 == 0 || s.step + 1 == tc.steps) {
      spdlog::info("step {:>6}  loss {:.4f}  lr {:.2e}  |g| {:.3e}", s.step, s.loss, s.lr, s.grad_norm);
    }
  });
  const double val_final = denoising_loss(model.cfg, model.ema, val.x0, val.sigmas, val.noise).item();
  spdlog::info("validation loss {:.4f} -> {:.4f}", val_initial, val_final);

  io::write_file(ctx.out / artifact::kTrainLog, log.str());
  json meta = base_meta(ctx, "train-denoiser");
  meta["config"] = json::parse(canonical_json(c))["train"];
  meta["validation_loss_initial"] = val_initial;
  meta["validation_loss_final"] = val_final;
  save_denoiser(ctx.out / artifact::kDenoiser, model, meta.dump());
}

void sample(const Context& ctx) {
  const auto& c = ctx.cfg;
  const auto model = load_denoiser(require_artifact(ctx, artifact::kDenoiser));
  const auto transport = ot::load_transport(require_artifact(ctx, artifact::kTransport));
  const auto y = load(ctx, artifact::kLfCoarse);
  const auto mask = c.mask();
  const std::size_t nc = c.sampling.conditions, per = c.sampling.samples_per_condition;
  const auto conditions = y.slice(c.ot.n_samples, c.ot.n_samples + nc);

  SnapshotDataset debiased = ot::debias_dataset(transport, conditions, ctx.threads);
  const Schedule sch;
  SamplerOptions opts{c.sampling.steps, c.sampling.terminal_denoise};

  for (const bool use_ot : {false, true}) {
    const auto& cond = use_ot ? debiased : conditions;
    const char* stream = use_ot ? "sample-ot" : "sample-raw";
    std::vector<double> out(nc * per * mask.d);
    std::atomic<std::size_t> done{0};
    spdlog::info("sampling {} x {} conditional fields ({} conditions)", nc, per, use_ot ? "OT-corrected" : "raw");
    parallel_for(nc * per, ctx.threads, [&](std::size_t i) {
      const std::size_t ci = i / per;
      std::vector<double> yp(cond.snapshot(ci).begin(), cond.snapshot(ci).end());
      for (double& v : yp) v /= model.sigma_data;
      const auto spec = ConstraintSpec::from_mask(mask, std::move(yp), c.sampling.alpha_tilde);
      Rng rng(derive_seed(c.seed, stream, i));
      auto x = sample_reverse_sde(sch, conditioned_denoiser_fn(model, spec), mask.d, opts, rng);
      for (std::size_t k = 0; k < mask.d; ++k) out[i * mask.d + k] = x[k] * model.sigma_data;
      const std::size_t d = ++done;
      if (d % 16 == 0 || d == nc * per) spdlog::info("  {}/{} samples", d, nc * per);
    });
    json meta = base_meta(ctx, "sample");
    meta["method"] = use_ot ? "OT+cDfn" : "Raw+cDfn";
    meta["samples_per_condition"] = per;
    meta["config"] = json::parse(canonical_json(c))["sampling"];
    save(ctx, use_ot ? artifact::kSamplesOt : artifact::kSamplesRaw, SnapshotDataset(mask.d, std::move(out)), meta);
    save(ctx, use_ot ? artifact::kConditionsOt : artifact::kConditionsRaw, cond, meta);
  }
}

void baseline(const Context& ctx) {
  const auto& c = ctx.cfg;
  const auto transport = ot::load_transport(require_artifact(ctx, artifact::kTransport));
  const auto y = load(ctx, artifact::kLfCoarse);
  const auto hf = load(ctx, artifact::kHf);
  const auto mask = c.mask();
  const std::size_t n = c.ot.n_samples;
  const auto held_out = y.slice(n, y.size());
  const json meta = base_meta(ctx, "baseline");

  const auto debiased = ot::debias_dataset(transport, held_out, ctx.threads);
  save(ctx, artifact::kOtCoarse, debiased, meta);

  std::vector<double> cubic;
  cubic.reserve(debiased.size() * mask.d);
  for (std::size_t i = 0; i < debiased.size(); ++i) {
    const auto u = baselines::cubic_upsample(debiased.snapshot(i), mask.stride);
    cubic.insert(cubic.end(), u.begin(), u.end());
  }
  save(ctx, artifact::kOtCubic, SnapshotDataset(mask.d, std::move(cubic)), meta);

  std::vector<double> interp;
  interp.reserve(n * mask.d);
  for (std::size_t i = 0; i < n; ++i) {
    const auto u = baselines::cubic_upsample(y.snapshot(i), mask.stride);
    interp.insert(interp.end(), u.begin(), u.end());
  }
  const auto train_hf = hf.slice(0, n);
  const auto qt = baselines::fit_quantile_table(interp, train_hf.values, mask.d, c.bcsd_quantiles);
  const auto qt_path = ctx.out / artifact::kQuantiles;
  baselines::save_quantile_table(qt_path, qt);
  json qmeta = meta;
  qmeta["quantiles"] = c.bcsd_quantiles;
  write_sidecar(qt_path, qmeta);

  std::vector<double> matched;
  matched.reserve(held_out.size() * mask.d);
  std::size_t clamped = 0;
  for (std::size_t i = 0; i < held_out.size(); ++i) {
    const auto u = baselines::bcsd(held_out.snapshot(i), qt, mask.stride, &clamped);
    matched.insert(matched.end(), u.begin(), u.end());
  }
  json bmeta = meta;
  bmeta["clamped_values"] = clamped;
  save(ctx, artifact::kBcsd, SnapshotDataset(mask.d, std::move(matched)), bmeta);
}

std::string metrics_json(const Context& ctx, const std::string& method, const SnapshotDataset& pred,
                         const SnapshotDataset& ref, const SnapshotDataset* conditions, std::size_t group_size,
                         const SnapshotDataset* lf_inputs) {
  if (pred.n_grid != ref.n_grid) {
    throw std::invalid_argument(method + ": prediction grid " + std::to_string(pred.n_grid) +
                                " differs from reference grid " + std::to_string(ref.n_grid));
  }
  const auto& mc = ctx.cfg.metrics;
  const std::size_t dim = pred.n_grid;
  const auto e_pred = metrics::mean_energy_spectrum(pred.values, dim);
  const auto e_ref = metrics::mean_energy_spectrum(ref.values, dim);
  const auto mu = metrics::melr(e_pred, e_ref, false);
  const auto mw = metrics::melr(e_pred, e_ref, true);
  const auto bw = metrics::median_bandwidths(pred.values, ref.values, dim, mc.mmd_scales);

  json j = base_meta(ctx, "evaluate");
  j["method"] = method;
  j["n_pred"] = pred.size();
  j["n_ref"] = ref.size();
  j["dim"] = dim;
  j["covRMSE"] = metrics::cov_rmse(pred.values, ref.values, dim);
  j["MELRu"] = mu.value;
  j["MELRw"] = mw.value;
  j["melr_excluded_modes"] = mu.excluded;
  j["KLD"] = metrics::kde_kld(pred.values, ref.values, dim);
  j["Wass1"] = metrics::wass1(pred.values, ref.values, dim, mc.wass1_lo, mc.wass1_hi, mc.wass1_bins);
  j["MMD"] = metrics::mmd(pred.values, ref.values, dim, bw);
  j["mmd_bandwidths"] = bw;
  j["Var"] = group_size > 1 ? metrics::variability(pred.values, dim, group_size) : 0.0;

  const std::size_t per = std::max<std::size_t>(1, group_size);
  auto expand = [&](const SnapshotDataset& per_condition) {
    std::vector<double> v;
    v.reserve(pred.size() * per_condition.n_grid);
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const auto s = per_condition.snapshot(i / per);
      v.insert(v.end(), s.begin(), s.end());
    }
    return v;
  };
  const std::size_t coarse = conditions ? conditions->n_grid : (lf_inputs ? lf_inputs->n_grid : 0);
  const auto mask = coarse ? ks::SelectionMask::make(dim, coarse) : ks::SelectionMask{};
  if (conditions) {
    j["constraintRMSE"] = metrics::constraint_rmse(pred.values, mask, expand(*conditions));
  } else {
    j["constraintRMSE"] = 0.0;
  }
  if (lf_inputs) {
    std::vector<double> down;
    down.reserve(pred.size() * coarse);
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const auto s = ks::apply_selection(pred.snapshot(i), mask);
      down.insert(down.end(), s.begin(), s.end());
    }
    j["sMAPE"] = metrics::smape(expand(*lf_inputs), down);
  } else {
    j["sMAPE"] = 0.0;
  }

  std::ostringstream csv;
  csv.precision(12);
  csv << "k,log_ratio,energy_pred,energy_ref\n";
  for (std::size_t k = 0; k < e_ref.size(); ++k) {
    csv << k << ',' << mu.log_ratio[k] << ',' << e_pred[k] << ',' << e_ref[k] << '\n';
  }
  j["energy_csv"] = csv.str();
  return j.dump();
}

namespace {

std::string slug(const std::string& method) {
  std::string s;
  for (char ch : method) {
    if (std::isalnum(static_cast<unsigned char>(ch))) {
      s.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    } else if (!s.empty() && s.back() != '_') {
      s.push_back('_');
    }
  }
  return s;
}

void write_metrics(const Context& ctx, const std::string& method, const std::string& text) {
  auto j = json::parse(text);
  const std::string csv = j["energy_csv"].get<std::string>();
  j.erase("energy_csv");
  const auto name = slug(method);
  io::write_file(ctx.out / ("metrics_" + name + ".json"), j.dump(2) + "\n");
  io::write_file(ctx.out / ("energy_" + name + ".csv"), csv);
  spdlog::info("{:<10} covRMSE {:.4f}  MELRu {:.4f}  MELRw {:.4f}  KLD {:.4f}  Wass1 {:.4f}  MMD {:.4e}", method,
               j["covRMSE"].get<double>(), j["MELRu"].get<double>(), j["MELRw"].get<double>(),
               j["KLD"].get<double>(), j["Wass1"].get<double>(), j["MMD"].get<double>());
}

}  // namespace

void evaluate(const Context& ctx) {
  const auto& c = ctx.cfg;
  const std::size_t n = c.ot.n_samples;
  const auto y = load(ctx, artifact::kLfCoarse);
  const auto yp = load(ctx, artifact::kHfCoarse);
  const auto hf = load(ctx, artifact::kHf);
  const auto lr_ref = yp.slice(n, yp.size());
  const auto hr_ref = hf.slice(n, hf.size());
  const auto lf_held = y.slice(n, y.size());
  const auto ot_lr = load(ctx, artifact::kOtCoarse);

  write_metrics(ctx, "LFLR", metrics_json(ctx, "LFLR", lf_held, lr_ref, &lf_held, 1, &lf_held));
  write_metrics(ctx, "OT", metrics_json(ctx, "OT", ot_lr, lr_ref, &ot_lr, 1, &lf_held));
  write_metrics(ctx, "OT+Cubic",
                metrics_json(ctx, "OT+Cubic", load(ctx, artifact::kOtCubic), hr_ref, &ot_lr, 1, &lf_held));
  write_metrics(ctx, "BCSD", metrics_json(ctx, "BCSD", load(ctx, artifact::kBcsd), hr_ref, &lf_held, 1, &lf_held));

  const std::size_t per = c.sampling.samples_per_condition;
  const auto cond_raw = load(ctx, artifact::kConditionsRaw);
  const auto cond_ot = load(ctx, artifact::kConditionsOt);
  write_metrics(ctx, "Raw+cDfn",
                metrics_json(ctx, "Raw+cDfn", load(ctx, artifact::kSamplesRaw), hr_ref, &cond_raw, per, &cond_raw));
  write_metrics(ctx, "OT+cDfn",
                metrics_json(ctx, "OT+cDfn", load(ctx, artifact::kSamplesOt), hr_ref, &cond_ot, per, &cond_raw));
}

void evaluate_files(const Context& ctx, const fs::path& pred, const fs::path& ref, const std::string& method) {
  write_metrics(ctx, method, metrics_json(ctx, method, load_dataset(pred), load_dataset(ref), nullptr, 1, nullptr));
}

void report(const Context& ctx) {
  static const char* kRows[] = {"LFLR", "OT", "OT+Cubic", "BCSD", "Raw+cDfn", "OT+cDfn"};
  static const char* kCols[] = {"covRMSE", "MELRu", "MELRw", "KLD", "Wass1", "MMD", "Var", "constraintRMSE", "sMAPE"};
  json rows = json::array();
  std::set<std::string> hashes;
  for (const char* method : kRows) {
    const auto path = require_artifact(ctx, "metrics_" + slug(method) + ".json");
    auto j = json::parse(io::read_file(path));
    hashes.insert(j.at("config_hash").get<std::string>());
    rows.push_back(j);
  }
  if (hashes.size() > 1 && !ctx.force) {
    throw std::runtime_error("report: metrics were produced by different configurations; rerun or pass --force");
  }
  json out = base_meta(ctx, "report");
  out["rows"] = rows;
  out["mixed_hashes"] = hashes.size() > 1;
  io::write_file(ctx.out / artifact::kReportJson, out.dump(2) + "\n");

  std::ostringstream md;
  md << "| Method |";
  for (const char* col : kCols) md << ' ' << col << " |";
  md << "\n|---|";
  for (std::size_t i = 0; i < std::size(kCols); ++i) md << "---|";
  md << '\n';
  char buf[64];
  for (const auto& r : rows) {
    md << "| " << r["method"].get<std::string>() << " |";
    for (const char* col : kCols) {
      std::snprintf(buf, sizeof buf, " %.4g |", r[col].get<double>());
      md << buf;
    }
    md << '\n';
  }
  io::write_file(ctx.out / artifact::kReportMd, md.str());
  spdlog::info("wrote {}", (ctx.out / artifact::kReportMd).string());
}

}  // namespace dsk::pipeline
