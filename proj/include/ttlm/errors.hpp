#pragma once

#include <stdexcept>
#include <string>

namespace ttlm {

// Base of every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shapes that do not line up for an operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Word index or tensor coordinate out of range.
class IndexError : public Error {
 public:
  using Error::Error;
};

// A materialized tensor would exceed the configured entry cap.
class CapExceededError : public Error {
 public:
  using Error::Error;
};

// Non-finite value in a hidden state, logits or loss.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Bad user configuration (maps to the CLI usage exit code).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Corpus or vocabulary problems.
class DataError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  enum class Kind { Io, BadMagic, VersionMismatch, KindMismatch, ShapeMismatch, Truncated };

  CheckpointError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

}  // namespace ttlm
