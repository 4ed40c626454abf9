#pragma once

#include <stdexcept>
#include <string>

namespace qip {

/// Base class for every error thrown by this library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// A caller violated a precondition: dimension mismatch, malformed argument,
/// out-of-range size.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// A numerical integrity check failed: a trace with a large imaginary part,
/// an eigenvalue below the PSD floor, NaN/Inf appearing during training.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// An iterative solver ran out of its sweep budget. Carries the residual at
/// the point of giving up.
class NonConvergenceError : public NumericalError {
 public:
  NonConvergenceError(const std::string& what, double final_residual)
      : NumericalError(what), final_residual_(final_residual) {}
  double final_residual() const { return final_residual_; }

 private:
  double final_residual_;
};

/// The top eigenvalue is degenerate where a unique ground state is required.
class UgsViolationError : public Error {
 public:
  using Error::Error;
};

/// File access or parse failure. line() is 1-based when known, -1 otherwise.
class IoError : public Error {
 public:
  explicit IoError(const std::string& what, long line = -1)
      : Error(line >= 0 ? what + " (line " + std::to_string(line) + ")" : what),
        line_(line) {}
  long line() const { return line_; }

 private:
  long line_;
};

}  // namespace qip
