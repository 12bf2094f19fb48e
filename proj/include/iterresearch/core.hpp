#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "iterresearch/error.hpp"

namespace iterresearch {

using json = nlohmann::json;

struct Question {
  std::string id;
  std::string text;
  std::optional<std::string> reference_answer;

  bool operator==(const Question&) const = default;
};

struct ToolCall {
  std::string tool_name;
  json arguments = json::object();

  bool operator==(const ToolCall&) const = default;
};

struct FinalAnswer {
  std::string text;

  bool operator==(const FinalAnswer&) const = default;
};

using Action = std::variant<ToolCall, FinalAnswer>;

inline bool is_tool_call(const Action& a) { return std::holds_alternative<ToolCall>(a); }
inline bool is_final_answer(const Action& a) { return std::holds_alternative<FinalAnswer>(a); }

/// One structured model turn. `think` is scratch text and never leaves the round.
struct RoundResponse {
  std::string think;
  std::string report;
  Action action;

  bool operator==(const RoundResponse&) const = default;
};

enum class ToolStatus { ok, error, timeout };

struct ToolResponse {
  std::string tool_name;
  ToolStatus status = ToolStatus::ok;
  std::string content;
  std::int64_t latency_ms = 0;

  bool operator==(const ToolResponse&) const = default;
};

/// The Markov state handed to the policy at a round.
struct Workspace {
  Question question;
  int round_index = 1;
  std::string prev_report;
  std::optional<Action> prev_action;
  std::optional<ToolResponse> prev_tool_response;

  bool operator==(const Workspace&) const = default;
};

Workspace initial_workspace(Question question);

struct RoundRecord {
  Workspace workspace;
  RoundResponse response;
  std::optional<ToolResponse> tool_response;
  // Raw model reply that produced `response`; this is the training target text.
  std::string raw_reply;
  // Size and FNV-1a fingerprint of the rendered prompt for this round.
  std::int64_t prompt_chars = 0;
  std::string prompt_fingerprint;
  // Reply obtained from the answer-only prompt after the round budget ran out.
  bool forced_final = false;

  bool operator==(const RoundRecord&) const = default;
};

enum class Termination {
  running,
  final_answer,
  budget_exhausted,
  parse_failure,
  backend_failure,
  context_overflow,
};

enum class RunMode { iter, mono };

struct SamplingParams {
  double temperature = 0.6;
  double top_p = 0.95;
  int max_rounds = 100;
  std::int64_t seed = 0;

  bool operator==(const SamplingParams&) const = default;
};

void validate_sampling(const SamplingParams& s);

struct Trajectory {
  std::string id;
  Question question;
  RunMode mode = RunMode::iter;
  std::vector<RoundRecord> rounds;
  std::optional<std::string> final_answer;
  Termination termination = Termination::running;
  SamplingParams sampling;
  // Last parse/backend error text for failure terminations.
  std::optional<std::string> failure_detail;

  bool terminated() const { return termination != Termination::running; }
  bool operator==(const Trajectory&) const = default;
};

/// Throws Error(index_gap | already_terminated).
Trajectory append_round(Trajectory trajectory, RoundRecord record);

struct Violation {
  std::string field;
  std::string rule;

  bool operator==(const Violation&) const = default;
};

std::vector<Violation> validate_workspace(const Workspace& ws);
std::vector<Violation> validate_trajectory(const Trajectory& trajectory);

std::string_view to_string(ToolStatus s);
std::string_view to_string(Termination t);
std::string_view to_string(RunMode m);

// Text helpers shared across modules.
std::string trim(std::string_view s);
/// Trim, ASCII case-fold, collapse internal whitespace runs to one space.
std::string normalize_answer(std::string_view s);
/// Cuts `s` to at most `cap` bytes on a UTF-8 code point boundary and appends `marker`.
std::string truncate_utf8(std::string_view s, std::size_t cap, std::string_view marker);
std::uint64_t fnv1a64(std::string_view s, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

/// Compact dump; invalid UTF-8 in strings is replaced rather than thrown on.
std::string dump_json(const json& j);

// Canonical JSON (snake_case field names; nlohmann's sorted object keys make dumps byte-stable).
void to_json(json& j, const Question& v);
void from_json(const json& j, Question& v);
void to_json(json& j, const ToolCall& v);
void from_json(const json& j, ToolCall& v);
void to_json(json& j, const FinalAnswer& v);
void from_json(const json& j, FinalAnswer& v);
void to_json(json& j, const Action& v);
void from_json(const json& j, Action& v);
void to_json(json& j, const RoundResponse& v);
void from_json(const json& j, RoundResponse& v);
void to_json(json& j, const ToolResponse& v);
void from_json(const json& j, ToolResponse& v);
void to_json(json& j, const Workspace& v);
void from_json(const json& j, Workspace& v);
void to_json(json& j, const RoundRecord& v);
void from_json(const json& j, RoundRecord& v);
void to_json(json& j, const SamplingParams& v);
void from_json(const json& j, SamplingParams& v);
void to_json(json& j, const Trajectory& v);
void from_json(const json& j, Trajectory& v);

ToolStatus tool_status_from_string(std::string_view s);
Termination termination_from_string(std::string_view s);
RunMode run_mode_from_string(std::string_view s);

}  // namespace iterresearch
