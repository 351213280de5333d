#pragma once

#include <stdexcept>
#include <string>

namespace phasebal {

// Base for every error raised by the library. The CLI maps the three
// families below onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad input: configuration, correlation matrix, sweep point. Exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// An iterative method did not reach its tolerance. Exit code 3.
class SolverFailure : public Error {
 public:
  using Error::Error;
};

// A runtime invariant was broken (power balance, energy bounds). Exit code 4.
class InvariantViolation : public Error {
 public:
  using Error::Error;
};

class InvalidConfig : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class NonPSDCorrelation : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class NonpositiveNumerator : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class InfeasibleSweepPoint : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class AssumptionViolation : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class Nonconverged : public SolverFailure {
 public:
  Nonconverged(const std::string& what, double primal_residual, double dual_residual)
      : SolverFailure(what), primal_residual_(primal_residual), dual_residual_(dual_residual) {}

  double primal_residual() const { return primal_residual_; }
  double dual_residual() const { return dual_residual_; }

 private:
  double primal_residual_;
  double dual_residual_;
};

class NonconvergedBlock : public SolverFailure {
 public:
  using SolverFailure::SolverFailure;
};

class BalanceViolation : public InvariantViolation {
 public:
  using InvariantViolation::InvariantViolation;
};

class StateBoundViolation : public InvariantViolation {
 public:
  using InvariantViolation::InvariantViolation;
};

class ProtocolOrderViolation : public InvariantViolation {
 public:
  using InvariantViolation::InvariantViolation;
};

class MissingUplink : public InvariantViolation {
 public:
  using InvariantViolation::InvariantViolation;
};

}  // namespace phasebal
