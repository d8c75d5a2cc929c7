#pragma once

#include <stdexcept>
#include <string>

namespace sparsespike {

// Error families map one-to-one onto CLI exit codes (see experiment.hpp).

/// Invalid configuration or model parameters.
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

/// An iterative solver did not reach its tolerance within its budget.
class NonConvergence : public std::runtime_error {
 public:
  explicit NonConvergence(const std::string& what) : std::runtime_error(what) {}
};

/// A random instance could not be generated.
class GenerationFailure : public std::runtime_error {
 public:
  explicit GenerationFailure(const std::string& what) : std::runtime_error(what) {}
};

class InfeasibleSequence : public GenerationFailure {
 public:
  using GenerationFailure::GenerationFailure;
};

class RestartBudgetExhausted : public GenerationFailure {
 public:
  using GenerationFailure::GenerationFailure;
};

class NotConverged : public NonConvergence {
 public:
  using NonConvergence::NonConvergence;
};

class MaxSweepsExceeded : public NonConvergence {
 public:
  using NonConvergence::NonConvergence;
};

class MaxRescalesExceeded : public NonConvergence {
 public:
  using NonConvergence::NonConvergence;
};

class RootNotBracketed : public NonConvergence {
 public:
  using NonConvergence::NonConvergence;
};

/// Raised by the population update when lambda - sum(W^2/omega) <= 0.
class NonPositiveOmega : public NonConvergence {
 public:
  using NonConvergence::NonConvergence;
};

/// Raised by Monte Carlo estimators and the m(lambda) solver when a
/// resolvent denominator is not strictly positive.
class NonPositiveDenominator : public NonConvergence {
 public:
  using NonConvergence::NonConvergence;
};

class CapExceeded : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class DimensionMismatch : public std::invalid_argument {
 public:
  explicit DimensionMismatch(const std::string& what) : std::invalid_argument(what) {}
};

}  // namespace sparsespike
