#pragma once

#include <optional>
#include <stdexcept>
#include <string>

namespace amm {

/// Base class of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

class ArgumentError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Raised when a network output, loss or parameter stops being finite.
/// The training step index is attached once the error reaches the game loop.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what, std::optional<long> step = std::nullopt)
      : Error(step ? what + " (step " + std::to_string(*step) + ")" : what), step_(step) {}

  std::optional<long> step() const { return step_; }

 private:
  std::optional<long> step_;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

class CheckpointVersionError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

/// Checkpoint content disagrees with the run configuration (e.g. different K).
class CheckpointConflictError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

}  // namespace amm
