#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace skillrec {

// Base of every error the library throws. kind() is a stable, machine-parsable
// tag the CLI prints in front of the message.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : Error("parse", source + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what) : Error("invalid", what) {}
};

class NotFoundError : public Error {
 public:
  explicit NotFoundError(const std::string& what) : Error("not_found", what) {}
};

// Transient failure (remote timeout, connection refused); the caller may retry.
class RetryableError : public Error {
 public:
  explicit RetryableError(const std::string& what) : Error("retryable", what) {}
};

}  // namespace skillrec
