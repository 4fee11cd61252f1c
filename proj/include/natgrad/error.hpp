#pragma once

#include <stdexcept>
#include <string>

namespace natgrad {

/// Shapes or lengths of operands do not agree.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A computation produced NaN/Inf or hit a numerically undefined quantity.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The reduction ratio has a zero denominator.
class UndefinedRatioError : public NumericError {
 public:
  using NumericError::NumericError;
};

/// Malformed or unknown configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace natgrad
