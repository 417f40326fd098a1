#pragma once

#include <stdexcept>
#include <string>

namespace freejac {

/// Raised when an argument violates an operation's precondition.
class PreconditionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when an iterative kernel (eigensolver, SVD) fails to converge or a
/// quantity that must be finite is not.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An S-transform was requested for a series with zero first moment.
class UndefinedTransformError : public PreconditionError {
 public:
  using PreconditionError::PreconditionError;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw PreconditionError(message);
}

}  // namespace freejac
