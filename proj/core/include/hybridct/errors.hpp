#pragma once

#include <stdexcept>
#include <string>

namespace hybridct {

// Invalid configuration files or command-line input.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// MAP prior fitting failed (quadrature or EM did not converge).
class FittingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A numeric routine failed to reach its tolerance.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace hybridct
