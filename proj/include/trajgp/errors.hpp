#pragma once

#include <stdexcept>
#include <string>

namespace trajgp {

// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Precondition violation: non-finite values, empty inputs, bad parameters.
class InvalidInputError : public Error {
 public:
  using Error::Error;
};

// Numerical failure: covariance not positive definite after jitter
// escalation, degenerate innovation variance, diverged optimization.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Unreadable or unparseable data file.
class IoError : public Error {
 public:
  using Error::Error;
};

// Invalid run configuration: missing path, inconsistent flags.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace trajgp
