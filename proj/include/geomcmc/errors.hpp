#pragma once

#include <stdexcept>
#include <string>

namespace geomcmc {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

/// A matrix that must be positive definite (or merely invertible) is not.
class SingularMatrix : public Error {
 public:
  using Error::Error;
};

/// NaN or infinity where a finite value is required.
class NonFinite : public Error {
 public:
  using Error::Error;
};

/// Invalid or inconsistent configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace geomcmc
