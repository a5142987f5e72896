#pragma once

#include <stdexcept>
#include <string>

namespace egowm {

/// Base of every error raised by the library. Subclasses map onto CLI exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor extents or layer configuration.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Malformed files, missing clips, inconsistent directory layouts.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Bad or unknown configuration keys and flag values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values or solver failures.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace egowm
