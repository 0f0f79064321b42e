#pragma once

#include <stdexcept>
#include <string>

namespace cdcor {

// Base for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes do not fit the requested operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// An operation produced NaN or Inf.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

// Malformed or unusable input data.
class DataError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration value or file.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace cdcor
