#include "dsk/checkpoint.hpp"

#include <limits>
#include <stdexcept>

#include "dsk/binary_io.hpp"

namespace dsk {

std::string encode_checkpoint(const ParameterSet& params) {
  io::Writer w;
  w.magic("DKPT");
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params) {
    if (name.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw std::invalid_argument("checkpoint: tensor name too long: " + name.substr(0, 40));
    }
    if (t.rank() > std::numeric_limits<std::uint8_t>::max()) {
      throw std::invalid_argument("checkpoint: rank too large for " + name);
    }
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.bytes(name);
    w.u8(static_cast<std::uint8_t>(t.rank()));
    for (auto d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
    w.f64s(t.values());
  }
  return w.buffer();
}

ParameterSet decode_checkpoint(std::string bytes, const std::string& what) {
  io::Reader r(std::move(bytes), what);
  r.expect_magic("DKPT");
  const auto version = r.u32();
  if (version != kCheckpointVersion) {
    throw std::runtime_error(what + ": unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = r.u32();
  ParameterSet out;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.bytes(r.u16());
    const auto rank = r.u8();
    Shape shape(rank);
    for (auto& d : shape) d = r.u32();
    auto values = r.f64s(shape_numel(shape));
    if (!out.emplace(name, Tensor(std::move(shape), std::move(values))).second) {
      throw std::runtime_error(what + ": duplicate tensor " + name);
    }
  }
  r.expect_end();
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const ParameterSet& params) {
  io::write_file(path, encode_checkpoint(params));
}

ParameterSet load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(io::read_file(path), path.string());
}

}  // namespace dsk
