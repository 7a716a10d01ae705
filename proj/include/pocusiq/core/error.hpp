#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace pocusiq {

/// Failure classes surfaced by the library. The CLI maps them onto exit codes.
enum class ErrorCategory { Usage, Data, Numeric };

inline std::string_view to_string(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::Usage: return "usage";
    case ErrorCategory::Data: return "data";
    case ErrorCategory::Numeric: return "numeric";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

/// Bad arguments or preconditions the caller controls.
class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error(ErrorCategory::Usage, what) {}
};

/// Unreadable, malformed or inconsistent input data.
class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorCategory::Data, what) {}
};

/// Non-finite values, singular systems, degenerate statistics.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(ErrorCategory::Numeric, what) {}
};

}  // namespace pocusiq
