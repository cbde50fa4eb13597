#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace trajtrack {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A value violated an operation's precondition (non-finite input, bad shape, ...).
class InvalidInput : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed record in a text file; carries the 1-based line number.
class FormatError : public IoError {
 public:
  FormatError(std::size_t line, const std::string& what)
      : IoError("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// A computation produced a non-finite value.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace trajtrack
