#pragma once

#include <stdexcept>
#include <string>

namespace dk {

/// Invalid configuration or violated precondition on a parameter.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain of an operation (negative dt, eta < 0, ...).
struct DomainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Numerical breakdown: non-convergence, NaN, unsolvable system.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace dk
