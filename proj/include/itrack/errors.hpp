#pragma once

#include <stdexcept>
#include <string>

namespace itrack {

// Every failure raised by the library derives from Error so callers (the CLI,
// the Python bindings) can catch one type and still switch on the concrete one.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input file; the message carries the offending line number.
class ParseError : public Error {
 public:
  ParseError(const std::string& file, std::size_t line, const std::string& what)
      : Error(file + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Well-formed input that violates a data invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// A price, return, feature or target needed by a computation is absent.
class MissingDataError : public Error {
 public:
  using Error::Error;
};

// Regression or distribution fit with no spread in its inputs.
class DegenerateError : public Error {
 public:
  using Error::Error;
};

class EmptyInputError : public Error {
 public:
  using Error::Error;
};

// Tensor or grid shapes that do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Modeling-level inconsistency, e.g. a prediction missing for a MILP instrument.
class ModelingError : public Error {
 public:
  using Error::Error;
};

class ScheduleError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  ConfigError(const std::string& field, const std::string& what)
      : Error("config field '" + field + "': " + what), field_(field) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

// Raised when an artifact for an episode would depend on data dated at or after
// its rebalance step.
class LookAheadError : public Error {
 public:
  using Error::Error;
};

}  // namespace itrack
