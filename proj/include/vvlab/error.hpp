#pragma once

#include <stdexcept>
#include <string>

namespace vvlab {

/// Raised when a caller violates an operation's precondition
/// (bad dimensions, out-of-range parameters, malformed configuration).
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a computation produces non-finite values or exceeds a
/// resource budget mid-run.
class NumericalAbort : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ContractViolation(message);
}

}  // namespace vvlab
