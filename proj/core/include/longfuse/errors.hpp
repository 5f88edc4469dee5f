#pragma once

#include <stdexcept>
#include <string>

namespace longfuse {

// Base class for everything this library throws on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent input data (CSV parsing, invariant violations).
class DataError : public Error {
 public:
  using Error::Error;
};

// Numerical failure of a model fit: rank deficiency, separation,
// non-convergence, degenerate variance.
class FitError : public Error {
 public:
  using Error::Error;
};

// Invalid arguments to an operation (bad flag combinations, out-of-range
// tuning parameters).
class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace longfuse
