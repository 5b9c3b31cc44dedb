#pragma once

#include <stdexcept>
#include <string>

namespace vot {

// Error categories; the CLI maps each category to a distinct exit code.
enum class errc {
  io = 3,
  invalid_input = 4,
  infeasible_match = 5,
  non_monotone = 6,
  numeric = 7,
};

class error : public std::runtime_error {
 public:
  error(errc code, const std::string& msg) : std::runtime_error(msg), code_(code) {}
  errc code() const noexcept { return code_; }

 private:
  errc code_;
};

[[noreturn]] inline void fail(errc code, const std::string& msg) {
  throw error(code, msg);
}

inline void require(bool cond, errc code, const std::string& msg) {
  if (!cond) fail(code, msg);
}

}  // namespace vot
