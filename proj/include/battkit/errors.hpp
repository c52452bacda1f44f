#pragma once

#include <stdexcept>
#include <string>

namespace battkit {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad arguments, violated preconditions, non-finite inputs.
struct InvalidInput : Error {
  using Error::Error;
};

// Malformed files: CSV schema, non-uniform sampling, bad JSON.
struct FormatError : Error {
  using Error::Error;
};

// Scenario/config level problems (unreachable profile bounds, missing files).
struct ConfigError : Error {
  using Error::Error;
};

// Data carries no usable excitation for a parameter estimator.
struct IdentifiabilityError : Error {
  using Error::Error;
};

// Filter divergence: non-positive innovation covariance, covariance blow-up.
struct NumericalFailure : Error {
  using Error::Error;
};

// Polynomial fit rejected: ill-conditioned or non-monotone result.
struct FitFailure : Error {
  using Error::Error;
};

}  // namespace battkit
