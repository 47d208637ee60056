#pragma once

#include <stdexcept>
#include <string>

namespace steinsim {

/// Invalid configuration, schema violation, or malformed input file.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Numerical failure during evaluation (singular system, estimator collapse).
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A rollout left the admissible state region.
struct DivergenceError : NumericalError {
  DivergenceError(const std::string& msg, int step)
      : NumericalError(msg + " at step " + std::to_string(step)), step_index(step) {}
  int step_index;
};

/// A traced derivative evaluation produced a non-finite intermediate.
struct NonFiniteError : NumericalError {
  NonFiniteError(const std::string& msg, long op)
      : NumericalError(msg + " at operation " + std::to_string(op)), op_index(op) {}
  long op_index;
};

}  // namespace steinsim
