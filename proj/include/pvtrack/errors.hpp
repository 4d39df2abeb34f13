#pragma once

#include <stdexcept>
#include <string>

namespace pvtrack {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain of a function.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Datasheet values that cannot produce a physical parameter set.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Iterative solver failed to converge or to bracket a root.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Invalid scenario or CLI configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or incomplete CSV input.
class CsvError : public Error {
 public:
  using Error::Error;
};

}  // namespace pvtrack
