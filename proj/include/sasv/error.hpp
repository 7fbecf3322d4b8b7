#pragma once

#include <stdexcept>
#include <string>

namespace sasv {

// Bad or inconsistent input data: malformed files, missing ids, range
// violations. The CLI maps these to exit code 1.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public InputError {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : InputError(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class LookupError : public InputError {
 public:
  using InputError::InputError;
};

// Numerical failure (divergence, non-finite values produced by computation).
// The CLI maps these to exit code 2.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace sasv
