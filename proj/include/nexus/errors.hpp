#pragma once

#include <stdexcept>
#include <string>

namespace nexus {

// Bad input: shapes, ranges, configuration. CLI exit code 1.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Non-finite values or a numerically impossible request. CLI exit code 2.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace nexus
