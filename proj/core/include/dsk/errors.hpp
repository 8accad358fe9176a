#pragma once

#include <stdexcept>

namespace dsk {

// Invalid or inconsistent configuration (unknown keys, bad ranges).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Blow-up, NaN/Inf, or another numerical failure during a computation.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dsk
