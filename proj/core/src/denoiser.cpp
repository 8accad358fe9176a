#include "dsk/denoiser.hpp"

#include <cmath>
#include <stdexcept>

#include <json.hpp>

#include "dsk/binary_io.hpp"
#include "dsk/checkpoint.hpp"
#include "dsk/ops.hpp"

namespace dsk {

Preconditioning preconditioning(double sigma, double sigma_d) {
  if (!(sigma > 0.0)) throw std::invalid_argument("preconditioning: sigma must be positive");
  const double sd2 = sigma_d * sigma_d;
  const double total = sd2 + sigma * sigma;
  return {sd2 / total, sigma * sigma_d / std::sqrt(total), 1.0 / std::sqrt(total), 0.25 * std::log(sigma)};
}

DenoiserModel make_denoiser(const UNetConfig& cfg, std::uint64_t seed, double sigma_data) {
  Rng rng(seed);
  DenoiserModel m;
  m.cfg = cfg;
  m.params = init_unet(cfg, rng);
  m.ema = m.params;
  m.sigma_data = sigma_data;
  return m;
}

Tensor denoiser_apply(const UNetConfig& cfg, const ParameterSet& params, const Tensor& x_hat, double sigma) {
  if (x_hat.shape() != Shape{cfg.length}) {
    throw std::invalid_argument("denoiser_apply: expected [" + std::to_string(cfg.length) + "], got " +
                                shape_string(x_hat.shape()));
  }
  const auto c = preconditioning(sigma);
  const Tensor features({cfg.noise_dim}, fourier_noise_embedding(sigma, cfg.noise_dim));
  const Tensor in = ops::reshape(ops::scale(x_hat, c.c_in), {1, cfg.length});
  const Tensor f = ops::reshape(unet_forward(cfg, params, in, features), {cfg.length});
  return ops::add(ops::scale(x_hat, c.c_skip), ops::scale(f, c.c_out));
}

DenoiserFn ema_denoiser(const DenoiserModel& model) {
  return [&model](std::span<const double> x_hat, double sigma) {
    const Tensor x({x_hat.size()}, std::vector<double>(x_hat.begin(), x_hat.end()));
    return denoiser_apply(model.cfg, model.ema, x, sigma).data();
  };
}

std::string unet_config_json(const UNetConfig& cfg) {
  nlohmann::json j = {{"length", cfg.length},
                      {"channels", cfg.channels},
                      {"blocks", cfg.blocks},
                      {"noise_dim", cfg.noise_dim},
                      {"groups", cfg.groups}};
  return j.dump();
}

void save_denoiser(const std::filesystem::path& path, const DenoiserModel& model, const std::string& extra_json) {
  ParameterSet all;
  for (const auto& [k, v] : model.params) all.emplace("raw/" + k, v.detached());
  for (const auto& [k, v] : model.ema) all.emplace("ema/" + k, v.detached());
  save_checkpoint(path, all);
  auto meta = nlohmann::json::parse(extra_json);
  meta["unet"] = nlohmann::json::parse(unet_config_json(model.cfg));
  meta["sigma_data"] = model.sigma_data;
  meta["parameter_count"] = parameter_count(model.params);
  auto side = path;
  side += ".meta.json";
  io::write_file(side, meta.dump(2) + "\n");
}

DenoiserModel load_denoiser(const std::filesystem::path& path) {
  auto side = path;
  side += ".meta.json";
  const auto meta = nlohmann::json::parse(io::read_file(side));
  DenoiserModel m;
  const auto& u = meta.at("unet");
  m.cfg.length = u.at("length").get<std::size_t>();
  m.cfg.channels = u.at("channels").get<std::vector<std::size_t>>();
  m.cfg.blocks = u.at("blocks").get<std::size_t>();
  m.cfg.noise_dim = u.at("noise_dim").get<std::size_t>();
  m.cfg.groups = u.at("groups").get<std::size_t>();
  m.cfg.validate();
  m.sigma_data = meta.at("sigma_data").get<double>();
  for (auto& [k, v] : load_checkpoint(path)) {
    if (k.rfind("raw/", 0) == 0) {
      m.params.emplace(k.substr(4), std::move(v));
    } else if (k.rfind("ema/", 0) == 0) {
      m.ema.emplace(k.substr(4), std::move(v));
    } else {
      throw std::runtime_error(path.string() + ": unexpected tensor " + k);
    }
  }
  return m;
}

}  // namespace dsk
