#pragma once

#include <stdexcept>
#include <string>

namespace noisefuse {

enum class Errc {
  io,
  bad_magic,
  unknown_dtype,
  truncated,
  non_finite,
  shape_mismatch,
  out_of_range,
  invalid_argument,
  unknown_key,
  type_mismatch,
  constraint_violation,
  zero_norm,
  singular,
  duplicate_key,
  missing_key,
  unknown_condition,
};

const char* to_string(Errc code) noexcept;

// Every failure raised by the library carries one of the codes above so that
// callers (tests, CLI, bindings) can branch on the kind rather than the text.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

// Rethrows `e` with `context` prepended, keeping the code.
[[noreturn]] inline void rethrow_with_context(const Error& e,
                                              const std::string& context) {
  throw Error(e.code(), context + ": " + e.what());
}

}  // namespace noisefuse
