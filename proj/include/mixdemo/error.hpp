#pragma once

#include <stdexcept>
#include <string>

namespace mixdemo {

// Numeric values double as CLI exit codes and C API status codes.
enum class ErrorKind : int {
  kUsage = 1,
  kData = 2,
  kProvider = 3,
  kInternal = 4,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Bad arguments or preconditions violated by the caller.
class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error(ErrorKind::kUsage, what) {}
};

/// Malformed or inconsistent input data (dataset files, checkpoints, caches).
class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorKind::kData, what) {}
};

/// An embedding or generation backend failed. `status` is the HTTP status
/// when one was received, 0 otherwise.
class ProviderError : public Error {
 public:
  explicit ProviderError(const std::string& what, int status = 0)
      : Error(ErrorKind::kProvider, what), status_(status) {}

  int status() const noexcept { return status_; }

 private:
  int status_;
};

}  // namespace mixdemo
