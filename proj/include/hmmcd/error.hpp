#pragma once

#include <stdexcept>
#include <string>

namespace hmmcd {

/// Invalid model, scenario or configuration input.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A computation left its numerically representable range (zero norm, underflow).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A Monte Carlo estimator could not produce an estimate (no usable trials, no drift, ...).
class EstimationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Request too large for an exact (enumerative) computation.
class SizeGuardError : public std::length_error {
 public:
  using std::length_error::length_error;
};

}  // namespace hmmcd
