#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace mml {

/// Invalid argument or violated precondition.
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Base of the numerical failures below; also thrown directly for non-finite
/// results.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Linear system is numerically singular (pivot below threshold).
class SingularityError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Input has no usable direction (all-zero beamformer, all-zero u, ...).
class DegenerateInputError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Request exceeds what the routine supports (e.g. grid search with K > 3).
class CapabilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed binary file. Carries the byte offset where decoding failed.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Configuration problem, naming the offending key and (when known) line.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& key, int line, const std::string& what)
      : std::runtime_error(format(key, line, what)), key_(key), line_(line) {}
  const std::string& key() const noexcept { return key_; }
  int line() const noexcept { return line_; }

 private:
  static std::string format(const std::string& key, int line, const std::string& what) {
    std::string s = "config key '" + key + "'";
    if (line > 0) s += " (line " + std::to_string(line) + ")";
    return s + ": " + what;
  }
  std::string key_;
  int line_;
};

/// Bad command-line usage (missing checkpoint, unknown method, ...).
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mml
