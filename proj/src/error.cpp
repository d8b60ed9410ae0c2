#include "dtrs/error.hpp"

namespace dtrs {

std::string_view error_kind_name(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::parse: return "parse";
    case ErrorKind::conflict: return "conflict";
    case ErrorKind::bounds: return "bounds";
    case ErrorKind::degenerate_knots: return "degenerate-knots";
    case ErrorKind::not_positive_definite: return "not-positive-definite";
    case ErrorKind::insufficient_data: return "insufficient-data";
    case ErrorKind::ridge_degenerate: return "ridge-degenerate";
    case ErrorKind::divergence: return "divergence";
    case ErrorKind::split: return "split";
    case ErrorKind::config: return "config";
    case ErrorKind::cold_start_unresolvable: return "cold-start-unresolvable";
    case ErrorKind::io: return "io";
  }
  return "unknown";
}

bool is_numerical(ErrorKind kind) noexcept {
  return kind == ErrorKind::not_positive_definite ||
         kind == ErrorKind::ridge_degenerate || kind == ErrorKind::divergence;
}

}  // namespace dtrs
