#pragma once

#include <stdexcept>
#include <string>

namespace tscl {

struct DimensionMismatch : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// An arcsin argument or similar left its domain by more than round-off;
/// the covariance it came from is not a valid one.
struct IntegralDomainError : std::domain_error {
  using std::domain_error::domain_error;
};

struct SingularCovariance : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DecompositionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A trajectory or training run produced NaN/Inf. `what()` carries a dump of
/// the last valid state.
struct NonFiniteError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace tscl
