#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace handa {

// Base for every error raised by the library. The CLI maps the concrete
// subclasses onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand dimensions do not chain.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// A documented precondition was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

// A projection or decomposition hit a rank-deficient input.
class DegeneracyError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf appeared in a gradient or loss.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Malformed input file. `line` is 1-based; 0 when the error is not tied to a line.
class FormatError : public Error {
 public:
  FormatError(const std::string& path, std::size_t line, const std::string& what)
      : Error(path + (line ? ":" + std::to_string(line) : std::string()) + ": " + what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace handa
