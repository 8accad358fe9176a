#include <cstdlib>
#include <iostream>
#include <optional>
#include <thread>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "dsk/config.hpp"
#include "dsk/errors.hpp"
#include "dsk/pipeline.hpp"
#include "dsk/version.hpp"

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

void configure_logging() {
  const char* env = std::getenv("DSK_LOG");
  if (!env || !*env) {
    spdlog::set_level(spdlog::level::info);
    return;
  }
  const auto level = spdlog::level::from_str(env);
  // from_str maps unknown names to off; only honor that when asked for.
  if (level == spdlog::level::off && std::string_view(env) != "off") {
    spdlog::set_level(spdlog::level::info);
    spdlog::warn("DSK_LOG={} is not a log level; using info", env);
    return;
  }
  spdlog::set_level(level);
}

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  unsigned threads = std::max(1u, std::thread::hardware_concurrency());
  std::string out = "runs/default";
  bool force = false;
  std::string pred, ref, method = "custom";
};

void add_common(CLI::App* cmd, Options& o) {
  cmd->add_option("--config", o.config, "JSON configuration file")->required();
  cmd->add_option("--seed", o.seed, "override the configured master seed");
  cmd->add_option("--threads", o.threads, "maximum worker threads")->check(CLI::PositiveNumber);
  cmd->add_option("--out", o.out, "artifact directory");
  cmd->add_flag("--force", o.force, "let report combine metrics from different configurations");
}

}  // namespace

int main(int argc, char** argv) {
  configure_logging();

  CLI::App app{"Statistical downscaling of Kuramoto-Sivashinsky fields"};
  app.set_version_flag("--version", std::string(dsk::git_describe()));
  app.require_subcommand(1);

  Options o;
  auto* gen = app.add_subcommand("gen-data", "simulate high- and low-fidelity snapshot datasets");
  auto* fit = app.add_subcommand("fit-ot", "fit the entropic OT debiasing map");
  auto* train = app.add_subcommand("train-denoiser", "train the diffusion denoiser");
  auto* sample = app.add_subcommand("sample", "draw conditional samples with and without debiasing");
  auto* evaluate = app.add_subcommand("evaluate", "compute metrics for every method, or for one pair of files");
  auto* baseline = app.add_subcommand("baseline", "run OT+cubic and BCSD baselines");
  auto* report = app.add_subcommand("report", "collate metrics into report.json and report.md");
  for (auto* cmd : {gen, fit, train, sample, evaluate, baseline, report}) add_common(cmd, o);
  evaluate->add_option("--pred", o.pred, "prediction dataset (.dsnp)");
  evaluate->add_option("--ref", o.ref, "reference dataset (.dsnp)");
  evaluate->add_option("--method", o.method, "label for --pred/--ref evaluation");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitConfig;
  }

  try {
    dsk::RunConfig cfg = dsk::load_config(o.config);
    if (o.seed) cfg.seed = *o.seed;
    auto ctx = dsk::pipeline::make_context(std::move(cfg), o.out, o.threads);
    ctx.force = o.force;
    spdlog::info("config {} (hash {}), output {}, {} threads", o.config, ctx.hash, o.out, ctx.threads);

    if (gen->parsed()) {
      dsk::pipeline::gen_data(ctx);
    } else if (fit->parsed()) {
      dsk::pipeline::fit_ot(ctx);
    } else if (train->parsed()) {
      dsk::pipeline::train(ctx);
    } else if (sample->parsed()) {
      dsk::pipeline::sample(ctx);
    } else if (evaluate->parsed()) {
      if (o.pred.empty() != o.ref.empty()) throw dsk::ConfigError("--pred and --ref must be given together");
      if (!o.pred.empty()) {
        dsk::pipeline::evaluate_files(ctx, o.pred, o.ref, o.method);
      } else {
        dsk::pipeline::evaluate(ctx);
      }
    } else if (baseline->parsed()) {
      dsk::pipeline::baseline(ctx);
    } else if (report->parsed()) {
      dsk::pipeline::report(ctx);
    }
  } catch (const dsk::ConfigError& e) {
    spdlog::error("configuration error: {}", e.what());
    return kExitConfig;
  } catch (const dsk::NumericalError& e) {
    spdlog::error("numerical failure: {}", e.what());
    return kExitNumerical;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitFailure;
  }
  return 0;
}
