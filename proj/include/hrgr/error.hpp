#pragma once

#include <stdexcept>
#include <string>

namespace hrgr {

// Root of every error raised by the library. The CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller-side mistakes: bad shapes, bad arguments, malformed files.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class FormatError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class BadMagicError : public FormatError {
 public:
  using FormatError::FormatError;
};

class UnsupportedVersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

class BadDTypeError : public FormatError {
 public:
  using FormatError::FormatError;
};

class TruncatedPayloadError : public FormatError {
 public:
  using FormatError::FormatError;
};

// NaN/Inf, isolated graph nodes, failed gradient checks.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace hrgr
