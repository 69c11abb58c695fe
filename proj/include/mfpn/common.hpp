#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace mfpn {

// Error taxonomy mapped to CLI exit codes: usage -> 2, data -> 3, internal -> 4.
enum class ErrorKind { usage, data, internal };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string msg)
      : std::runtime_error(std::move(msg)), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail_usage(const std::string& msg) {
  throw Error(ErrorKind::usage, msg);
}
[[noreturn]] inline void fail_data(const std::string& msg) {
  throw Error(ErrorKind::data, msg);
}
[[noreturn]] inline void fail(const std::string& msg) {
  throw Error(ErrorKind::internal, msg);
}

inline void check(bool cond, const std::string& msg) {
  if (!cond) fail(msg);
}

}  // namespace mfpn
