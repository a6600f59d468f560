#pragma once

#include <stdexcept>
#include <string>

namespace polyqa {

// Error categories map onto CLI exit codes (usage=1, data=2, transport=3).
enum class ErrorKind { kUsage = 1, kData = 2, kTransport = 3 };

inline const char* error_prefix(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kUsage: return "error[usage]";
    case ErrorKind::kData: return "error[data]";
    case ErrorKind::kTransport: return "error[transport]";
  }
  return "error";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }
  int exit_code() const noexcept { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error(ErrorKind::kUsage, what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorKind::kData, what) {}
};

class TransportError : public Error {
 public:
  TransportError(const std::string& endpoint, const std::string& what)
      : Error(ErrorKind::kTransport, endpoint + ": " + what), endpoint_(endpoint) {}

  const std::string& endpoint() const noexcept { return endpoint_; }

 private:
  std::string endpoint_;
};

}  // namespace polyqa
