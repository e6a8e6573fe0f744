#pragma once

#include <stdexcept>
#include <string>

namespace ilm {

enum class Errc {
  invalid_spec,
  invalid_config,
  space_exhausted,
  parse_error,
  invariant_violation,
  io_error,
  shape_mismatch,
  dimension_mismatch,
  non_finite,
  sequence_too_long,
  uncategorizable,
  budget_exceeds_pool,
  index_out_of_range,
  duplicate_index,
  empty_batch,
  insufficient_category,
  degenerate_input,
  unknown_metric,
  usage_error,
};

const char* errc_name(Errc c);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& msg)
      : std::runtime_error(std::string(errc_name(code)) + ": " + msg), code_(code) {}
  Errc code() const { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& msg) { throw Error(code, msg); }

inline const char* errc_name(Errc c) {
  switch (c) {
    case Errc::invalid_spec: return "InvalidSpec";
    case Errc::invalid_config: return "InvalidConfig";
    case Errc::space_exhausted: return "SpaceExhausted";
    case Errc::parse_error: return "ParseError";
    case Errc::invariant_violation: return "InvariantViolation";
    case Errc::io_error: return "IoError";
    case Errc::shape_mismatch: return "ShapeMismatch";
    case Errc::dimension_mismatch: return "DimensionMismatch";
    case Errc::non_finite: return "NonFiniteValue";
    case Errc::sequence_too_long: return "SequenceTooLong";
    case Errc::uncategorizable: return "Uncategorizable";
    case Errc::budget_exceeds_pool: return "BudgetExceedsPool";
    case Errc::index_out_of_range: return "IndexOutOfRange";
    case Errc::duplicate_index: return "DuplicateIndex";
    case Errc::empty_batch: return "EmptyBatch";
    case Errc::insufficient_category: return "InsufficientCategory";
    case Errc::degenerate_input: return "DegenerateInput";
    case Errc::unknown_metric: return "UnknownMetric";
    case Errc::usage_error: return "UsageError";
  }
  return "Error";
}

}  // namespace ilm
