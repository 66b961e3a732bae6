#pragma once

#include <stdexcept>
#include <string>

namespace deltalag {

// Malformed input text (CSV rows, JSON fields).
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : std::runtime_error(line ? what + " (line " + std::to_string(line) + ")" : what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Well-formed input that violates a data invariant.
class DataError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid configuration or violated precondition on user-supplied settings.
class ConfigError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape mismatch between arrays.
class DimensionError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Argument outside an operation's domain (log of non-positive, non-finite input).
class DomainError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Caller broke an API contract (e.g. backward from a non-scalar).
class ContractError : public std::logic_error {
  using std::logic_error::logic_error;
};

// Corrupt or incompatible checkpoint file.
class FormatError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

class TrainingError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace deltalag
