#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace caplim {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition or type invariant was violated by the caller.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A test function failed its declared-bound audit.
class AuditFailure : public Error {
 public:
  using Error::Error;
};

/// Schema or invariant violation in a config file. `line` is 1-based, 0 if unknown.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, std::string reason, std::size_t line = 0)
      : Error(format(field, reason, line)),
        field_(std::move(field)),
        reason_(std::move(reason)),
        line_(line) {}

  const std::string& field() const noexcept { return field_; }
  const std::string& reason() const noexcept { return reason_; }
  std::size_t line() const noexcept { return line_; }

 private:
  static std::string format(const std::string& field, const std::string& reason,
                            std::size_t line) {
    std::string out = line > 0 ? "line " + std::to_string(line) + ": " : std::string{};
    return out + field + ": " + reason;
  }

  std::string field_;
  std::string reason_;
  std::size_t line_;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw InvalidArgument(message);
}

}  // namespace caplim
