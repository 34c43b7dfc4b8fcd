#pragma once

#include <stdexcept>
#include <string>

namespace orthotrack {

/// Operand shapes do not agree.
class DimensionError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// Non-finite values or a numerical routine that failed to converge.
class NumericError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Caller-supplied data violates a precondition.
class InputError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

} // namespace orthotrack
