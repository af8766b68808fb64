#pragma once

#include <stdexcept>
#include <string>

namespace aerocrowd {

/// Invalid input: scenario files, geometry, parameter ranges.
/// The CLI maps this to exit code 1.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Failure while a run is in progress (solver non-convergence, I/O).
/// The CLI maps this to exit code 2.
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace aerocrowd
