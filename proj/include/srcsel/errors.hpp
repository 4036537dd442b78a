#pragma once

#include <stdexcept>
#include <string>

namespace srcsel {

/// Bad argument: wrong dimension, missing class, out-of-range parameter.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A matrix failed the symmetric positive definite check, or a file held
/// data that violates a documented invariant.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed file contents.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Eigen-solver failure, non-finite loss, or similar.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Training produced a non-finite loss.
class TrainingError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Missing model, incompatible options.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An iterative solver hit its iteration cap. Carries the last iterate (as
/// a payload of the throwing routine's choosing) and the final residual.
template <typename Payload>
class ConvergenceError : public NumericalError {
 public:
  ConvergenceError(const std::string& what, Payload last, double residual)
      : NumericalError(what), last_(std::move(last)), residual_(residual) {}

  const Payload& last_iterate() const noexcept { return last_; }
  double residual() const noexcept { return residual_; }

 private:
  Payload last_;
  double residual_;
};

}  // namespace srcsel
