#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace headstrain {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration value or unknown configuration key.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Matrix or vector shapes that do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Feature schema mismatch, unknown channel or unknown feature.
class SchemaError : public Error {
 public:
  using Error::Error;
};

/// File parse, missing column, timestamp or filesystem failure.
class IoError : public Error {
 public:
  using Error::Error;
};

class InsufficientSamplesError : public Error {
 public:
  using Error::Error;
};

class SymmetryError : public Error {
 public:
  using Error::Error;
};

/// Cholesky hit a non-positive pivot. `pivot()` is 1-based.
class NotPositiveDefiniteError : public Error {
 public:
  explicit NotPositiveDefiniteError(std::size_t pivot)
      : Error("matrix is not positive definite (non-positive pivot at index " +
              std::to_string(pivot) + ")"),
        pivot_(pivot) {}
  std::size_t pivot() const noexcept { return pivot_; }

 private:
  std::size_t pivot_;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, std::size_t epoch)
      : Error(what + " diverged (non-finite loss) at epoch " + std::to_string(epoch)),
        epoch_(epoch) {}
  std::size_t epoch() const noexcept { return epoch_; }

 private:
  std::size_t epoch_;
};

/// Paired t-test whose differences have zero variance.
class DegenerateTestError : public Error {
 public:
  using Error::Error;
};

class ReportError : public Error {
 public:
  using Error::Error;
};

/// A pipeline stage failed; `stage()` names it and what() carries the cause.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& cause)
      : Error("stage '" + stage + "' failed: " + cause), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

}  // namespace headstrain
