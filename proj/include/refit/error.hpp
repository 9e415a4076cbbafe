#pragma once

#include <stdexcept>
#include <string>

namespace refit {

// Failure categories map onto CLI exit codes: kInvalidArgument -> 2,
// kDataIntegrity -> 3.
enum class ErrorKind {
  kInvalidArgument,
  kDataIntegrity,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void throw_invalid(const std::string& message) {
  throw Error(ErrorKind::kInvalidArgument, message);
}

[[noreturn]] inline void throw_data(const std::string& message) {
  throw Error(ErrorKind::kDataIntegrity, message);
}

}  // namespace refit
