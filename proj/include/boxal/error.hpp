#pragma once

#include <stdexcept>
#include <string>

namespace boxal {

// A value violates a domain invariant (degenerate box, bad score vector, ...).
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A caller broke an operation precondition (empty input, N larger than pool, ...).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Malformed input file. `line()` is 1-based, 0 when the error is not line-bound.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : std::runtime_error(source + (line ? ":" + std::to_string(line) : std::string()) + ": " + what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// The detector adapter failed to deliver (timeout, missing output, command failure).
class AdapterError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace boxal
