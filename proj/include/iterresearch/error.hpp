#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace iterresearch {

enum class Errc {
  invalid_argument,
  index_gap,
  already_terminated,
  invalid_workspace,
  invalid_trajectory,
  terminal_action,
  unknown_tool,
  schema_violation,
  empty_batch,
  empty_goal,
  transport,
  sandbox_unavailable,
  backend_exhausted,
  backend_refused,
  script_exhausted,
  no_usable_outcomes,
  missing_reference,
  render_mismatch,
  empty_group,
  empty_input,
  insufficient_samples,
  length_mismatch,
  non_positive_ratio,
  insufficient_attempts,
  dataset_parse,
  io,
};

std::string_view errc_name(Errc code) noexcept;

/// Single exception type for the library; callers branch on code().
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& detail)
      : std::runtime_error(std::string(errc_name(code)) + ": " + detail), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace iterresearch
