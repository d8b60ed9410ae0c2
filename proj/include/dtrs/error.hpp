#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dtrs {

enum class ErrorKind {
  parse,
  conflict,
  bounds,
  degenerate_knots,
  not_positive_definite,
  insufficient_data,
  ridge_degenerate,
  divergence,
  split,
  config,
  cold_start_unresolvable,
  io,
};

std::string_view error_kind_name(ErrorKind kind) noexcept;

// Numerical failures map to a distinct CLI exit code from validation failures.
bool is_numerical(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace dtrs
