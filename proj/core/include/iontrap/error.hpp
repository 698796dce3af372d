#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace iontrap {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input outside the domain of an operation (negative height, V > 1, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Malformed configuration, layout or scenario data.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A trap or chain configuration that is not a local minimum.
class UnstableError : public Error {
 public:
  using Error::Error;
};

/// An iterative solver stopped without meeting its tolerance.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double best_residual)
      : Error(what), best_residual_(best_residual) {}
  double best_residual() const noexcept { return best_residual_; }

 private:
  double best_residual_;
};

/// Quasi-static tracking of a ramp failed at a given step.
class NonAdiabaticRampError : public Error {
 public:
  NonAdiabaticRampError(const std::string& what, std::size_t step)
      : Error(what + " (ramp step " + std::to_string(step) + ")"), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

}  // namespace iontrap
