#pragma once

#include <stdexcept>
#include <string>

namespace ctpd {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input text. `line` is 1-based; 0 when unknown.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class SchemaError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A metric is undefined for the given labels (e.g. AUROC with one class).
class MetricError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values reached a loss or an optimizer step.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace ctpd
