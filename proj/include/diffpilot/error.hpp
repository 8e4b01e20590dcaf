#pragma once

#include <stdexcept>
#include <string>

namespace diffpilot {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller broke an operation's precondition (shape, range, terminal state).
class ContractViolation : public Error {
 public:
  using Error::Error;
};

/// Invalid user-supplied configuration (schedule bounds, gamma, probabilities).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf encountered in inputs, gradients or losses.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Malformed file content.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  explicit ParseError(const std::string& what) : Error(what), line_(0) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// File content is well formed but inconsistent (counts, invariants).
class IntegrityError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

namespace detail {
inline void require(bool ok, const char* msg) {
  if (!ok) throw ContractViolation(msg);
}
inline void require(bool ok, const std::string& msg) {
  if (!ok) throw ContractViolation(msg);
}
}  // namespace detail

}  // namespace diffpilot
