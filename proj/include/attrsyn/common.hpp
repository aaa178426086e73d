#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace attrsyn {

// Error with a short machine-readable code plus a human message. The CLI
// prints "ERROR <code>: <message>" and exits 1.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(code + ": " + message), code_(std::move(code)) {}
  const std::string& code() const { return code_; }

 private:
  std::string code_;
};

[[noreturn]] inline void fail(const std::string& code, const std::string& message) {
  throw Error(code, message);
}

inline void check(bool ok, const std::string& code, const std::string& message) {
  if (!ok) fail(code, message);
}

}  // namespace attrsyn
