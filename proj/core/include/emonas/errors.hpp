#pragma once

#include <stdexcept>
#include <string>

namespace emonas {

/// Base of every exception thrown by the library. `code()` is a short
/// machine-readable tag used by the command-line tool.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* code() const noexcept { return "error"; }
};

class ShapeError : public Error {
 public:
  using Error::Error;
  const char* code() const noexcept override { return "shape"; }
};

class NumericError : public Error {
 public:
  using Error::Error;
  const char* code() const noexcept override { return "non_finite"; }
};

/// Operation invoked in the wrong state (backward before forward, ...).
class StateError : public Error {
 public:
  using Error::Error;
  const char* code() const noexcept override { return "state"; }
};

class ConfigError : public Error {
 public:
  using Error::Error;
  const char* code() const noexcept override { return "config"; }
};

class IoError : public Error {
 public:
  using Error::Error;
  const char* code() const noexcept override { return "io"; }
};

/// Argument outside its domain (probability rows that do not sum to one,
/// unknown labels, misaligned identifiers).
class ValueError : public Error {
 public:
  using Error::Error;
  const char* code() const noexcept override { return "value"; }
};

/// Malformed file contents (bad magic, truncated payload, bad JSON schema).
class FormatError : public Error {
 public:
  using Error::Error;
  const char* code() const noexcept override { return "format"; }
};

}  // namespace emonas
