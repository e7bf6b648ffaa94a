#pragma once

#include <stdexcept>
#include <string>

namespace eebt {

// Base of every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller supplied something that violates a documented precondition.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Tensor shapes disagree.
class DimensionError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// A computation produced NaN or Inf.
class NumericError : public Error {
 public:
  using Error::Error;
};

// On-disk data is malformed (bad magic, wrong length, bad manifest).
class FormatError : public Error {
 public:
  using Error::Error;
};

// Filesystem level failure.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace eebt
