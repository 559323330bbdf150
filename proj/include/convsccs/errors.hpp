#pragma once

#include <stdexcept>
#include <string>

namespace convsccs {

// Bad input data (malformed records, events outside windows, non-case
// patients where cases are required).
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad configuration (missing keys, inconsistent dimensions, out-of-range
// hyper-parameters).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical failure: non-finite objective, typically a too-large step size.
class DivergenceError : public std::runtime_error {
 public:
  explicit DivergenceError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace convsccs
