#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cbvr {

/// Failure category; maps one-to-one onto CLI exit codes.
enum class ErrorKind { Config, Data, Internal };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorKind::Config, what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorKind::Data, what) {}
};

class InternalError : public Error {
 public:
  explicit InternalError(const std::string& what) : Error(ErrorKind::Internal, what) {}
};

inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config: return 2;
    case ErrorKind::Data: return 3;
    case ErrorKind::Internal: return 4;
  }
  return 4;
}

/// Routes non-fatal diagnostics. Default sink writes to stderr.
void warn(std::string_view message);

using WarningSink = void (*)(std::string_view);
/// Returns the previous sink.
WarningSink set_warning_sink(WarningSink sink);

}  // namespace cbvr
