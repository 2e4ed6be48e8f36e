#pragma once

#include <stdexcept>
#include <string>

namespace hqsd {

/// Bad input or a refused precondition. Maps to CLI exit code 1.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Non-finite state, exhausted horizon, degenerate ensemble. Maps to exit code 2.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace hqsd
