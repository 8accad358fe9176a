#include "dsk/config.hpp"

#include <cstdio>
#include <set>

#include <json.hpp>

#include "dsk/binary_io.hpp"
#include "dsk/errors.hpp"
#include "dsk/seed.hpp"

namespace dsk {
namespace {

using nlohmann::json;

// Reads the keys of one JSON object, remembering which were consumed so that
// leftovers can be reported as unknown.
class Fields {
 public:
  Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + ": expected an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
        if (!it->is_number_unsigned()) throw ConfigError(field(key) + ": expected a non-negative integer");
      } else if constexpr (std::is_same_v<T, bool>) {
        if (!it->is_boolean()) throw ConfigError(field(key) + ": expected a boolean");
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!it->is_number()) throw ConfigError(field(key) + ": expected a number");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!it->is_string()) throw ConfigError(field(key) + ": expected a string");
      }
      out = it->get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(field(key) + ": " + e.what());
    }
  }

  template <typename Fn>
  void object(const char* key, Fn&& fn) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    Fields sub(*it, field(key));
    fn(sub);
    sub.finish();
  }

  bool has(const char* key) const { return j_.contains(key); }

  void finish() const {
    for (const auto& [k, _] : j_.items()) {
      if (!seen_.count(k)) throw ConfigError("unknown configuration key " + field(k.c_str()));
    }
  }

  std::string field(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  std::string where() const { return path_.empty() ? "configuration" : path_; }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_ks(Fields& f, ks::Config& c) {
  f.get("L", c.L);
  f.get("nu", c.nu);
  f.get("n_grid", c.n_grid);
  f.get("dt", c.dt);
  f.get("n_modes", c.n_modes);
  f.get("ramp_time", c.ramp_time);
  f.get("sample_interval", c.sample_interval);
  f.get("n_snapshots_per_traj", c.n_snapshots_per_traj);
  f.get("n_trajectories", c.n_trajectories);
}

json ks_json(const ks::Config& c) {
  return {{"L", c.L},
          {"nu", c.nu},
          {"n_grid", c.n_grid},
          {"dt", c.dt},
          {"n_modes", c.n_modes},
          {"ramp_time", c.ramp_time},
          {"sample_interval", c.sample_interval},
          {"n_snapshots_per_traj", c.n_snapshots_per_traj},
          {"n_trajectories", c.n_trajectories}};
}

void check_ks(const ks::Config& c, const std::string& prefix) {
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(prefix + ": " + e.what());
  }
}

}  // namespace

void RunConfig::validate() const {
  check_ks(hf, "hf");
  check_ks(lf, "lf");
  if (d_prime == 0 || hf.n_grid % d_prime != 0) throw ConfigError("selection.d_prime must divide hf.n_grid");
  if (lf.n_grid % d_prime != 0) throw ConfigError("selection.d_prime must divide lf.n_grid");
  if (selection_offset >= hf.n_grid / d_prime) throw ConfigError("selection.offset must be below the stride");
  if (!(ot.epsilon > 0)) throw ConfigError("ot.epsilon must be positive");
  if (ot.n_samples < 2) throw ConfigError("ot.n_samples must be at least 2");
  const std::size_t hf_total = hf.n_trajectories * hf.n_snapshots_per_traj;
  const std::size_t lf_total = lf.n_trajectories * lf.n_snapshots_per_traj;
  if (ot.n_samples >= hf_total || ot.n_samples >= lf_total) {
    throw ConfigError("ot.n_samples must leave held-out snapshots in both datasets");
  }
  if (sampling.conditions == 0 || sampling.conditions > lf_total - ot.n_samples) {
    throw ConfigError("sampling.conditions must be between 1 and the number of held-out LF snapshots");
  }
  if (sampling.samples_per_condition == 0) throw ConfigError("sampling.samples_per_condition must be positive");
  if (sampling.steps == 0) throw ConfigError("sampling.steps must be positive");
  if (!(sampling.alpha_tilde >= 0)) throw ConfigError("sampling.alpha_tilde must be non-negative");
  if (unet.length != hf.n_grid) throw ConfigError("train.unet.length must equal hf.n_grid");
  unet.validate();
  train.validate();
  if (metrics.mmd_scales.empty()) throw ConfigError("metrics.mmd_scales must not be empty");
  if (!(metrics.wass1_hi > metrics.wass1_lo) || metrics.wass1_bins == 0) {
    throw ConfigError("metrics.wass1 range must be non-empty");
  }
  if (bcsd_quantiles == 0) throw ConfigError("baselines.quantiles must be positive");
}

RunConfig parse_config(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("configuration is not valid JSON: ") + e.what());
  }
  RunConfig c;
  Fields root(j, "");
  if (!root.has("version")) throw ConfigError("configuration is missing \"version\"");
  int version = 0;
  root.get("version", version);
  if (version != kConfigVersion) {
    throw ConfigError("unsupported configuration version " + std::to_string(version) + " (expected " +
                      std::to_string(kConfigVersion) + ")");
  }
  root.get("name", c.name);
  root.get("seed", c.seed);
  root.object("hf", [&](Fields& f) { read_ks(f, c.hf); });
  root.object("lf", [&](Fields& f) { read_ks(f, c.lf); });
  root.object("selection", [&](Fields& f) {
    f.get("d_prime", c.d_prime);
    f.get("offset", c.selection_offset);
  });
  root.object("ot", [&](Fields& f) {
    f.get("epsilon", c.ot.epsilon);
    f.get("n_samples", c.ot.n_samples);
    f.get("max_iters", c.ot.max_iters);
    f.get("tol", c.ot.tol);
  });
  root.object("train", [&](Fields& f) {
    f.object("unet", [&](Fields& u) {
      u.get("length", c.unet.length);
      u.get("channels", c.unet.channels);
      u.get("blocks", c.unet.blocks);
      u.get("noise_dim", c.unet.noise_dim);
      u.get("groups", c.unet.groups);
    });
    f.get("batch", c.train.batch);
    f.get("steps", c.train.steps);
    f.get("warmup", c.train.warmup);
    f.get("peak_lr", c.train.peak_lr);
    f.get("final_lr", c.train.final_lr);
    f.get("clip_norm", c.train.clip_norm);
    f.get("ema_decay", c.train.ema_decay);
    f.get("augment", c.train.augment);
  });
  root.object("sampling", [&](Fields& f) {
    f.get("steps", c.sampling.steps);
    f.get("alpha_tilde", c.sampling.alpha_tilde);
    f.get("conditions", c.sampling.conditions);
    f.get("samples_per_condition", c.sampling.samples_per_condition);
    f.get("terminal_denoise", c.sampling.terminal_denoise);
  });
  root.object("metrics", [&](Fields& f) {
    f.get("mmd_scales", c.metrics.mmd_scales);
    f.get("wass1_lo", c.metrics.wass1_lo);
    f.get("wass1_hi", c.metrics.wass1_hi);
    f.get("wass1_bins", c.metrics.wass1_bins);
  });
  root.object("baselines", [&](Fields& f) { f.get("quantiles", c.bcsd_quantiles); });
  root.finish();
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = io::read_file(path);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  return parse_config(text);
}

std::string canonical_json(const RunConfig& c) {
  json j = {{"version", kConfigVersion},
            {"name", c.name},
            {"seed", c.seed},
            {"hf", ks_json(c.hf)},
            {"lf", ks_json(c.lf)},
            {"selection", {{"d_prime", c.d_prime}, {"offset", c.selection_offset}}},
            {"ot", {{"epsilon", c.ot.epsilon}, {"n_samples", c.ot.n_samples}, {"max_iters", c.ot.max_iters}, {"tol", c.ot.tol}}},
            {"train",
             {{"unet",
               {{"length", c.unet.length},
                {"channels", c.unet.channels},
                {"blocks", c.unet.blocks},
                {"noise_dim", c.unet.noise_dim},
                {"groups", c.unet.groups}}},
              {"batch", c.train.batch},
              {"steps", c.train.steps},
              {"warmup", c.train.warmup},
              {"peak_lr", c.train.peak_lr},
              {"final_lr", c.train.final_lr},
              {"clip_norm", c.train.clip_norm},
              {"ema_decay", c.train.ema_decay},
              {"augment", c.train.augment}}},
            {"sampling",
             {{"steps", c.sampling.steps},
              {"alpha_tilde", c.sampling.alpha_tilde},
              {"conditions", c.sampling.conditions},
              {"samples_per_condition", c.sampling.samples_per_condition},
              {"terminal_denoise", c.sampling.terminal_denoise}}},
            {"metrics",
             {{"mmd_scales", c.metrics.mmd_scales},
              {"wass1_lo", c.metrics.wass1_lo},
              {"wass1_hi", c.metrics.wass1_hi},
              {"wass1_bins", c.metrics.wass1_bins}}},
            {"baselines", {{"quantiles", c.bcsd_quantiles}}}};
  return j.dump();
}

std::string config_hash(const RunConfig& cfg) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(canonical_json(cfg))));
  return buf;
}

}  // namespace dsk
