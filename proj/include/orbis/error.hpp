#pragma once

#include <stdexcept>
#include <string>

namespace orbis {

// Error categories map onto CLI exit codes (usage 1, data 2, divergence 3).
enum class ErrorKind { usage, data, numeric, divergence };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::usage:
      return 1;
    case ErrorKind::divergence:
      return 3;
    default:
      return 2;
  }
}

}  // namespace orbis
