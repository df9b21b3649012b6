#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace paramcrop {

// Base of every error thrown by the library. The CLI maps subclasses onto
// process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape or rank mismatch, invalid axis, zero-length axis.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Malformed or out-of-range configuration value.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& what)
      : Error(field + ": " + what), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

// Caller violated a documented precondition on values (e.g. non-unit rows).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Non-finite intermediate in a numeric kernel.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Non-finite loss or gradient during training; carries the step index.
class TrainingError : public Error {
 public:
  TrainingError(std::size_t step, const std::string& what)
      : Error("step " + std::to_string(step) + ": " + what), step_(step) {}

  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

// Metric requested for a configuration it is not defined on (rotated crops).
class UnsupportedMetricError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace paramcrop
