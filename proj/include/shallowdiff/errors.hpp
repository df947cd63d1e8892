#pragma once

#include <stdexcept>

namespace shallowdiff {

/// Bad input, configuration or file contents. CLI exit code 1.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Training produced a non-finite loss or activation. CLI exit code 2.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace shallowdiff
