#pragma once

#include <stdexcept>
#include <string>

namespace eql {

// Base of every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shapes or lengths that do not line up.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf where a finite value is required.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Out-of-range or inconsistent parameter values.
class ParameterError : public Error {
 public:
  using Error::Error;
};

// Malformed external data (CSV, config files).
class IngestionError : public Error {
 public:
  using Error::Error;
};

}  // namespace eql
