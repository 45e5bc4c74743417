#pragma once

#include <stdexcept>
#include <string>

namespace riskadapt {

// Base of every error raised by the library. Callers that only care about
// "something went wrong" catch this; the subclasses let the CLI map failures
// onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input text. Carries the 1-based line number when known.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Inputs are individually well formed but inconsistent with each other
// (duplicate ids, dangling references, schema mismatch).
class IntegrityError : public Error {
 public:
  using Error::Error;
};

// A documented precondition of an operation does not hold.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

}  // namespace riskadapt
