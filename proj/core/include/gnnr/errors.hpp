#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gnnr {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad input: malformed files, invariant violations, shape and dimension
/// mismatches, inconsistent configuration. The CLI maps these to exit code 1.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class ParseError : public ValidationError {
 public:
  ParseError(std::size_t byte_offset, const std::string& what)
      : ValidationError("parse error at byte " + std::to_string(byte_offset) + ": " + what),
        byte_offset_(byte_offset) {}

  std::size_t byte_offset() const noexcept { return byte_offset_; }

 private:
  std::size_t byte_offset_;
};

class ShapeError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// A stored param_hash does not match the content it claims to describe.
class IntegrityError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Failures during computation. The CLI maps these to exit code 2.
class RuntimeFailure : public Error {
 public:
  using Error::Error;
};

/// Loss or gradient became NaN/Inf.
class NumericError : public RuntimeFailure {
 public:
  using RuntimeFailure::RuntimeFailure;
};

/// An API precondition about object state was violated (e.g. reprogramming an
/// unfrozen model, or a frozen model's parameters changed underneath a call).
class ContractError : public RuntimeFailure {
 public:
  using RuntimeFailure::RuntimeFailure;
};

}  // namespace gnnr
