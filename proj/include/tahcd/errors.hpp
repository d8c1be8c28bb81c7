#pragma once

#include <stdexcept>
#include <string>

namespace tahcd {

// Bad user input: malformed config, unreadable CSV, shape mismatches.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Math went off the rails: NaN loss, non-finite update, factorization failure.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace tahcd
