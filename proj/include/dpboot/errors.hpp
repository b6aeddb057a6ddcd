#pragma once

#include <stdexcept>
#include <string>

namespace dpboot {

/// Bad inputs, malformed files, invalid configuration. CLI exit code 2.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

/// Numerical failures: solver aborts, singular matrices. CLI exit code 3.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace dpboot
