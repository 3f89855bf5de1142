#pragma once

#include <stdexcept>
#include <string>

namespace brainage {

enum class ErrorKind {
  kValidation,  // bad arguments, malformed manifests, invariant violations
  kFormat,      // malformed or unsupported file contents
  kShape,       // tensor / volume shape mismatch
  kNumeric,     // non-finite values, factorization or convergence failure
  kIo,          // file system errors
};

const char* to_string(ErrorKind kind);

/// Base exception for all library errors. The kind selects the CLI exit code.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& message) : Error(ErrorKind::kValidation, message) {}
};

class FormatError : public Error {
 public:
  explicit FormatError(const std::string& message) : Error(ErrorKind::kFormat, message) {}
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& message) : Error(ErrorKind::kShape, message) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& message) : Error(ErrorKind::kNumeric, message) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& message) : Error(ErrorKind::kIo, message) {}
};

}  // namespace brainage
