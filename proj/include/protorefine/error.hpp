#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace protorefine {

enum class ErrorCode {
  bad_magic,
  truncated,
  trailing_data,
  dimension_overflow,
  non_finite,
  empty,
  label_out_of_range,
  duplicate_id,
  unsorted_ids,
  cardinality_mismatch,
  id_mismatch,
  dimension_mismatch,
  not_stochastic,
  invalid_argument,
  degenerate_prototype,
  zero_norm,
  diverged,
  unreachable_rate,
  parse,
  io,
};

inline constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::bad_magic: return "bad_magic";
    case ErrorCode::truncated: return "truncated";
    case ErrorCode::trailing_data: return "trailing_data";
    case ErrorCode::dimension_overflow: return "dimension_overflow";
    case ErrorCode::non_finite: return "non_finite";
    case ErrorCode::empty: return "empty";
    case ErrorCode::label_out_of_range: return "label_out_of_range";
    case ErrorCode::duplicate_id: return "duplicate_id";
    case ErrorCode::unsorted_ids: return "unsorted_ids";
    case ErrorCode::cardinality_mismatch: return "cardinality_mismatch";
    case ErrorCode::id_mismatch: return "id_mismatch";
    case ErrorCode::dimension_mismatch: return "dimension_mismatch";
    case ErrorCode::not_stochastic: return "not_stochastic";
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::degenerate_prototype: return "degenerate_prototype";
    case ErrorCode::zero_norm: return "zero_norm";
    case ErrorCode::diverged: return "diverged";
    case ErrorCode::unreachable_rate: return "unreachable_rate";
    case ErrorCode::parse: return "parse";
    case ErrorCode::io: return "io";
  }
  return "unknown";
}

/// Every failure in the library surfaces as this exception; `code()` is stable
/// and meant for programmatic handling, `what()` for humans.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) fail(code, message);
}

}  // namespace protorefine
