#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace nfw {

/// Process exit codes used by the command-line front end.
enum class ExitCode : int {
  ok = 0,
  check_failed = 1,  // a repro target ran but missed its threshold
  usage = 2,
  validation = 3,
  numerical = 4,
  io = 5,
};

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  [[nodiscard]] virtual ExitCode exit_code() const noexcept = 0;
};

class UsageError : public Error {
 public:
  using Error::Error;
  [[nodiscard]] ExitCode exit_code() const noexcept override { return ExitCode::usage; }
};

/// Input violates a documented invariant. `index()` points at the offending
/// record when the failure is positional (e.g. a non-monotonic tag).
class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what, std::ptrdiff_t index = -1)
      : Error(what), index_(index) {}
  [[nodiscard]] ExitCode exit_code() const noexcept override { return ExitCode::validation; }
  [[nodiscard]] std::ptrdiff_t index() const noexcept { return index_; }

 private:
  std::ptrdiff_t index_;
};

/// Byte-level framing problem: bad magic, unsupported version, truncation.
class FormatError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class NumericalError : public Error {
 public:
  using Error::Error;
  [[nodiscard]] ExitCode exit_code() const noexcept override { return ExitCode::numerical; }
};

class IoError : public Error {
 public:
  using Error::Error;
  [[nodiscard]] ExitCode exit_code() const noexcept override { return ExitCode::io; }
};

}  // namespace nfw
