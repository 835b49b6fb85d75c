#pragma once

#include <stdexcept>
#include <string>

namespace adafuse {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller broke a documented precondition (shape mismatch, bad argument).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file (CSV, model JSON, config JSON).
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Training diverged or could not produce a usable model.
class TrainingError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ContractError(message);
}

}  // namespace detail
}  // namespace adafuse
