#pragma once

#include <filesystem>
#include <string>

#include "dsk/tensor.hpp"

// DKPT parameter container: "DKPT", version u32, count u32, then per tensor
// name length u16, name, rank u8, dims u32[rank], f64 payload. Names are
// written in lexicographic order.
namespace dsk {

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string encode_checkpoint(const ParameterSet& params);
ParameterSet decode_checkpoint(std::string bytes, const std::string& what = "checkpoint");

void save_checkpoint(const std::filesystem::path& path, const ParameterSet& params);
ParameterSet load_checkpoint(const std::filesystem::path& path);

}  // namespace dsk
