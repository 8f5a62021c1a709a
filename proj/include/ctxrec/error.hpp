#pragma once

#include <stdexcept>
#include <string>

namespace ctxrec {

/// Base class for every error raised by the library. `kind()` is a short
/// machine-readable tag used by the CLI diagnostics.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
  virtual const char* kind() const noexcept = 0;
};

class DimensionError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "dimension"; }
};

class NumericError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "numeric"; }
};

// Raised for zero-norm vectors in cosine similarity (dead heads).
class DegenerateInputError : public NumericError {
 public:
  using NumericError::NumericError;
  const char* kind() const noexcept override { return "degenerate"; }
};

class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& what)
      : Error(what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }
  const char* kind() const noexcept override { return "config"; }

 private:
  std::string field_;
};

class DataError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "data"; }
};

class UnknownEntityError : public DataError {
 public:
  using DataError::DataError;
  const char* kind() const noexcept override { return "unknown_entity"; }
};

class SamplingError : public DataError {
 public:
  using DataError::DataError;
  const char* kind() const noexcept override { return "sampling"; }
};

class MetricError : public DataError {
 public:
  using DataError::DataError;
  const char* kind() const noexcept override { return "metric"; }
};

}  // namespace ctxrec
