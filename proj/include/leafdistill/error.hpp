#pragma once

#include <stdexcept>
#include <string>

namespace leafdistill {

// Base of every error the library throws. `kind()` is a stable
// machine-readable tag used in CLI error JSON.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept { return "error"; }
};

// Input data does not match the declared schema (missing columns, bad labels).
class SchemaError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "schema_error"; }
};

// A cell could not be parsed. `row()` is the 1-based data row (header excluded).
class ParseError : public Error {
 public:
  ParseError(const std::string& message, std::size_t row)
      : Error(message + " (row " + std::to_string(row) + ")"), row_(row) {}
  std::size_t row() const noexcept { return row_; }
  const char* kind() const noexcept override { return "parse_error"; }

 private:
  std::size_t row_;
};

class ArgumentError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "argument_error"; }
};

class LookupError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "lookup_error"; }
};

// A metric is mathematically undefined for the given inputs (e.g. AUC with one class).
class UndefinedMetricError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "undefined_metric"; }
};

class ConfigError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "config_error"; }
};

class InternalError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "internal_error"; }
};

}  // namespace leafdistill
