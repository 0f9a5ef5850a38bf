#pragma once

#include <stdexcept>
#include <string>

namespace mtln {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor or image dimensions.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A precondition on argument values was violated.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// NaN or Inf produced during a forward computation or training step.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Filesystem failures: missing or unwritable files.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed file contents (CSV rows, PGM headers, checkpoints).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Run configuration failed validation.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace mtln
