#pragma once

#include <stdexcept>
#include <string>

namespace dminter {

// Error categories map one-to-one onto the CLI exit codes.

/// Invalid configuration or API precondition (exit code 1 at the CLI).
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

/// Malformed or inconsistent input data (exit code 2).
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// Non-finite values or other numeric breakdowns (exit code 3).
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace dminter
