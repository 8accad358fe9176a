#include "dsk/unet.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "dsk/errors.hpp"
#include "dsk/ops.hpp"

namespace dsk {
namespace {

std::string key(const std::string& prefix, const char* leaf) { return prefix + "." + leaf; }

const Tensor& param(const ParameterSet& p, const std::string& name) {
  auto it = p.find(name);
  if (it == p.end()) throw std::invalid_argument("unet: missing parameter " + name);
  return it->second;
}

Tensor kaiming(Shape shape, std::size_t fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  const double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (double& v : t.mutable_values()) v = sd * rng.normal();
  return t;
}

Tensor filled(Shape shape, double v) {
  Tensor t(std::move(shape));
  for (double& x : t.mutable_values()) x = v;
  return t;
}

void add_conv(ParameterSet& p, const std::string& name, std::size_t cin, std::size_t cout,
              std::size_t k, Rng& rng, bool zero = false) {
  p[key(name, "w")] = zero ? Tensor({cout, cin, k}) : kaiming({cout, cin, k}, cin * k, rng);
  p[key(name, "b")] = Tensor({cout});
}

void add_norm(ParameterSet& p, const std::string& name, std::size_t c) {
  p[key(name, "gamma")] = filled({c}, 1.0);
  p[key(name, "beta")] = Tensor({c});
}

void add_linear(ParameterSet& p, const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
  p[key(name, "w")] = kaiming({out, in}, in, rng);
  p[key(name, "b")] = Tensor({out});
}

void add_block(ParameterSet& p, const std::string& name, std::size_t cin, std::size_t cout,
               std::size_t emb, Rng& rng) {
  add_norm(p, name + ".norm1", cin);
  add_conv(p, name + ".conv1", cin, cout, 3, rng);
  add_linear(p, name + ".shift", emb, cout, rng);
  add_norm(p, name + ".norm2", cout);
  add_conv(p, name + ".conv2", cout, cout, 3, rng, true);
  if (cin != cout) add_conv(p, name + ".skip", cin, cout, 1, rng);
}

Tensor conv(const ParameterSet& p, const std::string& name, const Tensor& x, std::size_t stride = 1) {
  return ops::conv1d_circular(x, param(p, key(name, "w")), param(p, key(name, "b")), stride);
}

Tensor norm_act(const ParameterSet& p, const std::string& name, const Tensor& x, std::size_t groups) {
  return ops::gelu(ops::group_norm(x, groups, param(p, key(name, "gamma")), param(p, key(name, "beta"))));
}

Tensor block(const ParameterSet& p, const std::string& name, const Tensor& x, const Tensor& emb,
             std::size_t groups) {
  Tensor h = conv(p, name + ".conv1", norm_act(p, name + ".norm1", x, groups));
  h = ops::add_channel_shift(h, ops::linear(param(p, name + ".shift.w"), emb, param(p, name + ".shift.b")));
  h = conv(p, name + ".conv2", norm_act(p, name + ".norm2", h, groups));
  const bool project = p.count(name + ".skip.w") != 0;
  return ops::add(h, project ? conv(p, name + ".skip", x) : x);
}

std::string level_name(const char* side, std::size_t l) { return std::string(side) + std::to_string(l); }

}  // namespace

void UNetConfig::validate() const {
  if (channels.empty()) throw ConfigError("unet.channels must not be empty");
  if (groups == 0) throw ConfigError("unet.groups must be positive");
  for (auto c : channels) {
    if (c == 0 || c % groups != 0) {
      throw ConfigError("unet.channels entries must be positive multiples of unet.groups");
    }
  }
  if (length == 0 || length % total_stride() != 0) {
    throw ConfigError("unet.length must be divisible by 2^levels = " + std::to_string(total_stride()));
  }
  if (noise_dim == 0 || noise_dim % 2 != 0) throw ConfigError("unet.noise_dim must be even and positive");
  if (blocks == 0) throw ConfigError("unet.blocks must be positive");
}

UNetConfig tiny_unet_config() {
  UNetConfig c;
  c.length = 16;
  c.channels = {4, 4};
  c.blocks = 1;
  c.noise_dim = 8;
  c.groups = 2;
  return c;
}

std::vector<double> fourier_noise_embedding(double sigma, std::size_t dim) {
  if (!(sigma > 0.0)) throw std::invalid_argument("fourier_noise_embedding: sigma must be positive");
  if (dim == 0 || dim % 2 != 0) throw std::invalid_argument("fourier_noise_embedding: dim must be even");
  const std::size_t half = dim / 2;
  const double c = 0.25 * std::log(sigma);
  std::vector<double> out(dim);
  for (std::size_t k = 0; k < half; ++k) {
    const double e = half > 1 ? -1.0 + 2.0 * static_cast<double>(k) / static_cast<double>(half - 1) : 0.0;
    const double arg = 2.0 * std::numbers::pi * std::pow(10.0, e) * c;
    out[k] = std::sin(arg);
    out[half + k] = std::cos(arg);
  }
  return out;
}

ParameterSet init_unet(const UNetConfig& cfg, Rng& rng) {
  cfg.validate();
  ParameterSet p;
  const std::size_t emb = cfg.noise_dim;
  const auto& ch = cfg.channels;
  add_linear(p, "embed_noise", emb, emb, rng);
  add_conv(p, "embed", 1, ch[0], 1, rng);
  for (std::size_t l = 0; l < cfg.levels(); ++l) {
    const std::string d = level_name("down", l);
    add_conv(p, d + ".down", l == 0 ? ch[0] : ch[l - 1], ch[l], 3, rng);
    for (std::size_t b = 0; b < cfg.blocks; ++b) add_block(p, d + ".block" + std::to_string(b), ch[l], ch[l], emb, rng);
  }
  for (std::size_t b = 0; b < cfg.blocks; ++b) add_block(p, "mid.block" + std::to_string(b), ch.back(), ch.back(), emb, rng);
  for (std::size_t l = 0; l < cfg.levels(); ++l) {
    const std::string u = level_name("up", l);
    for (std::size_t b = 0; b < cfg.blocks; ++b) {
      add_block(p, u + ".block" + std::to_string(b), b == 0 ? 2 * ch[l] : ch[l], ch[l], emb, rng);
    }
    add_conv(p, u + ".up", ch[l], l == 0 ? ch[0] : ch[l - 1], 3, rng);
  }
  add_norm(p, "head.norm", ch[0]);
  add_conv(p, "head.out", ch[0], 1, 1, rng, true);
  return p;
}

Tensor unet_forward(const UNetConfig& cfg, const ParameterSet& p, const Tensor& x, const Tensor& features) {
  if (x.shape() != Shape{1, cfg.length}) {
    throw std::invalid_argument("unet_forward: expected input [1, " + std::to_string(cfg.length) + "], got " +
                                shape_string(x.shape()));
  }
  if (features.shape() != Shape{cfg.noise_dim}) {
    throw std::invalid_argument("unet_forward: expected noise features [" + std::to_string(cfg.noise_dim) +
                                "], got " + shape_string(features.shape()));
  }
  const std::size_t g = cfg.groups;
  const Tensor emb = ops::gelu(ops::linear(param(p, "embed_noise.w"), features, param(p, "embed_noise.b")));

  Tensor h = conv(p, "embed", x);
  std::vector<Tensor> skips;
  for (std::size_t l = 0; l < cfg.levels(); ++l) {
    const std::string d = level_name("down", l);
    h = conv(p, d + ".down", h, 2);
    for (std::size_t b = 0; b < cfg.blocks; ++b) h = block(p, d + ".block" + std::to_string(b), h, emb, g);
    skips.push_back(h);
  }
  for (std::size_t b = 0; b < cfg.blocks; ++b) h = block(p, "mid.block" + std::to_string(b), h, emb, g);
  for (std::size_t l = cfg.levels(); l-- > 0;) {
    const std::string u = level_name("up", l);
    h = ops::concat_channels(h, skips[l]);
    for (std::size_t b = 0; b < cfg.blocks; ++b) h = block(p, u + ".block" + std::to_string(b), h, emb, g);
    h = conv(p, u + ".up", ops::upsample_nearest(h, 2));
  }
  return conv(p, "head.out", norm_act(p, "head.norm", h, g));
}

}  // namespace dsk
