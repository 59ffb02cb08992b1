// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace advhar {

/// Base class for every error raised by the library. The CLI maps the
/// concrete subclasses onto distinct process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed text input; carries the 1-based line number when known.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : Error(line ? what + " (line " + std::to_string(line) + ")" : what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Data does not match the dataset schema (column counts, dimensions).
class SchemaError : public Error {
 public:
  using Error::Error;
};

/// Invalid or unsupported configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Dataset content cannot support the requested operation.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Training stopped: non-finite loss or a data-hygiene violation.
class TrainingAbort : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace advhar
