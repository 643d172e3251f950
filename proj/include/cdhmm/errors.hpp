#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cdhmm {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input data or configuration is invalid. The CLI maps this to exit code 1.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A JSONL record or model document does not match its schema.
class SchemaError : public ValidationError {
 public:
  SchemaError(std::size_t line, std::string field, const std::string& what)
      : ValidationError("line " + std::to_string(line) + ": field '" + field +
                        "': " + what),
        line_(line),
        field_(std::move(field)) {}

  std::size_t line() const noexcept { return line_; }
  const std::string& field() const noexcept { return field_; }

 private:
  std::size_t line_;
  std::string field_;
};

/// Numerical breakdown during inference (for example an all-zero emission row).
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace cdhmm
