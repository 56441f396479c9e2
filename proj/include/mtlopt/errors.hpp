#pragma once

#include <stdexcept>

namespace mtlopt {

// Error taxonomy used across the library. Everything derives from
// std::exception so callers can catch broadly at the CLI boundary.

// Tensor shapes do not line up for the requested operation.
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// A scalar argument is outside its domain (negative stddev, bad percentile).
struct ParameterError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Non-finite values or division by zero reached a numeric kernel.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Inconsistent or unknown configuration (rejected keys, invalid combos).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// An id (parameter, task, run name) does not exist.
struct LookupError : std::out_of_range {
  using std::out_of_range::out_of_range;
};

// File could not be read, written, or decoded.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace mtlopt
