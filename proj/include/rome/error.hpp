#pragma once

#include <stdexcept>
#include <string>

namespace rome {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor shape / dimension mismatches.
struct ShapeError : Error {
  using Error::Error;
};

// Bad argument values (non-finite input, zero-norm vector, non-scalar loss, ...).
struct ValueError : Error {
  using Error::Error;
};

// File system and serialization failures.
struct IoError : Error {
  using Error::Error;
};

// Malformed input files; messages carry the offending line number.
struct ParseError : Error {
  using Error::Error;
};

// Invalid run configuration (unknown key, bad enum value, missing path).
struct ConfigError : Error {
  using Error::Error;
};

}  // namespace rome
