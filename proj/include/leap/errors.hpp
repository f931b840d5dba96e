#pragma once

#include <stdexcept>
#include <string>

namespace leap {

// Every error raised by the library derives from leap::Error so callers can
// catch broadly and map categories onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand extents are not conformable for the requested primitive.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A primitive produced NaN or Inf.
class NumericError : public Error {
 public:
  using Error::Error;
};

// A documented precondition was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Evaluation outside the domain of a function (e.g. a path beyond its knots).
class DomainError : public Error {
 public:
  using Error::Error;
};

class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class MetricError : public Error {
 public:
  using Error::Error;
};

class DegenerateVarianceError : public Error {
 public:
  using Error::Error;
};

// Raised by the ODE solvers when the state stops being finite.
class DivergenceError : public NumericError {
 public:
  DivergenceError(double time, const std::string& what)
      : NumericError("numeric divergence at t=" + std::to_string(time) + ": " + what), time_(time) {}

  double time() const noexcept { return time_; }

 private:
  double time_;
};

}  // namespace leap
