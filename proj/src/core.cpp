#include "iterresearch/core.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>

namespace iterresearch {

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::invalid_argument: return "InvalidArgument";
    case Errc::index_gap: return "IndexGap";
    case Errc::already_terminated: return "AlreadyTerminated";
    case Errc::invalid_workspace: return "InvalidWorkspace";
    case Errc::invalid_trajectory: return "InvalidTrajectory";
    case Errc::terminal_action: return "TerminalAction";
    case Errc::unknown_tool: return "UnknownTool";
    case Errc::schema_violation: return "SchemaViolation";
    case Errc::empty_batch: return "EmptyBatch";
    case Errc::empty_goal: return "EmptyGoal";
    case Errc::transport: return "TransportError";
    case Errc::sandbox_unavailable: return "SandboxUnavailable";
    case Errc::backend_exhausted: return "BackendExhausted";
    case Errc::backend_refused: return "BackendRefused";
    case Errc::script_exhausted: return "ScriptExhausted";
    case Errc::no_usable_outcomes: return "NoUsableOutcomes";
    case Errc::missing_reference: return "MissingReference";
    case Errc::render_mismatch: return "RenderMismatch";
    case Errc::empty_group: return "EmptyGroup";
    case Errc::empty_input: return "EmptyInput";
    case Errc::insufficient_samples: return "InsufficientSamples";
    case Errc::length_mismatch: return "LengthMismatch";
    case Errc::non_positive_ratio: return "NonPositiveRatio";
    case Errc::insufficient_attempts: return "InsufficientAttempts";
    case Errc::dataset_parse: return "DatasetParse";
    case Errc::io: return "IoError";
  }
  return "Unknown";
}

Workspace initial_workspace(Question question) {
  Workspace ws;
  ws.question = std::move(question);
  ws.round_index = 1;
  return ws;
}

void validate_sampling(const SamplingParams& s) {
  if (!std::isfinite(s.temperature) || s.temperature < 0.0) {
    throw Error(Errc::invalid_argument, "temperature must be finite and >= 0");
  }
  if (!(s.top_p > 0.0 && s.top_p <= 1.0)) {
    throw Error(Errc::invalid_argument, "top_p must lie in (0, 1]");
  }
  if (s.max_rounds < 1) throw Error(Errc::invalid_argument, "max_rounds must be >= 1");
}

Trajectory append_round(Trajectory trajectory, RoundRecord record) {
  if (trajectory.terminated()) {
    throw Error(Errc::already_terminated, "trajectory " + trajectory.id + " is terminated");
  }
  const auto expected = static_cast<int>(trajectory.rounds.size()) + 1;
  if (record.workspace.round_index != expected) {
    throw Error(Errc::index_gap, "expected round_index " + std::to_string(expected) + ", got " +
                                     std::to_string(record.workspace.round_index));
  }
  trajectory.rounds.push_back(std::move(record));
  return trajectory;
}

std::vector<Violation> validate_workspace(const Workspace& ws) {
  std::vector<Violation> out;
  if (trim(ws.question.text).empty()) out.push_back({"question.text", "must be non-empty after trim"});
  if (ws.round_index < 1) {
    out.push_back({"workspace.round_index", "must be >= 1"});
    return out;
  }
  if (ws.round_index == 1) {
    if (!ws.prev_report.empty()) out.push_back({"workspace.prev_report", "must be empty at round 1"});
    if (ws.prev_action) out.push_back({"workspace.prev_action", "must be absent at round 1"});
    if (ws.prev_tool_response) {
      out.push_back({"workspace.prev_tool_response", "must be absent at round 1"});
    }
    return out;
  }
  if (ws.prev_report.empty()) out.push_back({"workspace.prev_report", "must be present after round 1"});
  if (!ws.prev_action) {
    out.push_back({"workspace.prev_action", "must be present after round 1"});
  } else if (is_tool_call(*ws.prev_action) != ws.prev_tool_response.has_value()) {
    out.push_back({"workspace.prev_tool_response", "present iff prev_action is a tool call"});
  }
  return out;
}

namespace {

void check_action(const Action& a, const std::string& where, std::vector<Violation>& out) {
  if (const auto* call = std::get_if<ToolCall>(&a)) {
    if (call->tool_name.empty()) out.push_back({where + ".tool_name", "must be non-empty"});
    if (!call->arguments.is_object()) out.push_back({where + ".arguments", "must be an object"});
  } else if (trim(std::get<FinalAnswer>(a).text).empty()) {
    out.push_back({where + ".text", "final answer must be non-empty"});
  }
}

}  // namespace

std::vector<Violation> validate_trajectory(const Trajectory& t) {
  std::vector<Violation> out;
  if (trim(t.question.text).empty()) out.push_back({"question.text", "must be non-empty after trim"});
  if (t.sampling.max_rounds < 1) out.push_back({"sampling.max_rounds", "must be >= 1"});
  if (!(t.sampling.top_p > 0.0 && t.sampling.top_p <= 1.0)) {
    out.push_back({"sampling.top_p", "must lie in (0, 1]"});
  }

  for (std::size_t i = 0; i < t.rounds.size(); ++i) {
    const auto& r = t.rounds[i];
    const std::string at = "rounds[" + std::to_string(i) + "]";
    if (r.workspace.round_index != static_cast<int>(i) + 1) {
      out.push_back({at + ".workspace.round_index", "round indices must run 1..T consecutively"});
    }
    if (!(r.workspace.question == t.question)) {
      out.push_back({at + ".workspace.question", "must equal the trajectory question"});
    }
    for (auto v : validate_workspace(r.workspace)) {
      v.field = at + "." + v.field;
      out.push_back(std::move(v));
    }
    if (r.response.report.empty()) out.push_back({at + ".response.report", "must be non-empty"});
    check_action(r.response.action, at + ".response.action", out);
    if (r.tool_response && !is_tool_call(r.response.action)) {
      out.push_back({at + ".tool_response", "present only for tool-call actions"});
    }
    if (r.tool_response && r.tool_response->latency_ms < 0) {
      out.push_back({at + ".tool_response.latency_ms", "must be >= 0"});
    }
    if (is_final_answer(r.response.action) && i + 1 != t.rounds.size()) {
      out.push_back({at + ".response.action", "final answer must end the trajectory"});
    }
  }

  const bool answered_kind = t.termination == Termination::final_answer ||
                             t.termination == Termination::budget_exhausted;
  if (t.terminated() && answered_kind && t.rounds.empty()) {
    out.push_back({"trajectory.rounds", "must be non-empty once terminated"});
  }
  if (t.termination == Termination::final_answer && !t.final_answer) {
    out.push_back({"trajectory.final_answer", "required when termination = final_answer"});
  }
  if (t.final_answer) {
    const FinalAnswer* last = t.rounds.empty() ? nullptr
                                               : std::get_if<FinalAnswer>(&t.rounds.back().response.action);
    if (!last || last->text != *t.final_answer) {
      out.push_back({"trajectory.final_answer", "must equal the final answer of the last round"});
    }
  }
  return out;
}

std::string_view to_string(ToolStatus s) {
  switch (s) {
    case ToolStatus::ok: return "ok";
    case ToolStatus::error: return "error";
    case ToolStatus::timeout: return "timeout";
  }
  return "error";
}

std::string_view to_string(Termination t) {
  switch (t) {
    case Termination::running: return "running";
    case Termination::final_answer: return "final_answer";
    case Termination::budget_exhausted: return "budget_exhausted";
    case Termination::parse_failure: return "parse_failure";
    case Termination::backend_failure: return "backend_failure";
    case Termination::context_overflow: return "context_overflow";
  }
  return "running";
}

std::string_view to_string(RunMode m) { return m == RunMode::iter ? "iter" : "mono"; }

ToolStatus tool_status_from_string(std::string_view s) {
  if (s == "ok") return ToolStatus::ok;
  if (s == "error") return ToolStatus::error;
  if (s == "timeout") return ToolStatus::timeout;
  throw Error(Errc::invalid_argument, "unknown tool status '" + std::string(s) + "'");
}

Termination termination_from_string(std::string_view s) {
  for (auto t : {Termination::running, Termination::final_answer, Termination::budget_exhausted,
                 Termination::parse_failure, Termination::backend_failure, Termination::context_overflow}) {
    if (to_string(t) == s) return t;
  }
  throw Error(Errc::invalid_argument, "unknown termination '" + std::string(s) + "'");
}

RunMode run_mode_from_string(std::string_view s) {
  if (s == "iter") return RunMode::iter;
  if (s == "mono") return RunMode::mono;
  throw Error(Errc::invalid_argument, "unknown mode '" + std::string(s) + "'");
}

std::string trim(std::string_view s) {
  const auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
  std::size_t b = 0, e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return std::string(s.substr(b, e - b));
}

std::string normalize_answer(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (char c : s) {
    const auto uc = static_cast<unsigned char>(c);
    if (std::isspace(uc)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(uc)));
  }
  return out;
}

std::string truncate_utf8(std::string_view s, std::size_t cap, std::string_view marker) {
  if (s.size() <= cap) return std::string(s);
  std::size_t cut = cap;
  // Back up over continuation bytes (10xxxxxx) so a code point is never split.
  while (cut > 0 && (static_cast<unsigned char>(s[cut]) & 0xC0) == 0x80) --cut;
  std::string out(s.substr(0, cut));
  out += marker;
  return out;
}

std::uint64_t fnv1a64(std::string_view s, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string dump_json(const json& j) { return j.dump(-1, ' ', false, json::error_handler_t::replace); }

// ---------------------------------------------------------------------------
// JSON codec

namespace {

template <typename T>
std::optional<T> opt_field(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<T>();
}

template <typename T>
void put_opt(json& j, const char* key, const std::optional<T>& v) {
  if (v) {
    j[key] = *v;
  } else {
    j[key] = nullptr;
  }
}

}  // namespace

void to_json(json& j, const Question& v) {
  j = json{{"id", v.id}, {"text", v.text}};
  put_opt(j, "reference_answer", v.reference_answer);
}

void from_json(const json& j, Question& v) {
  j.at("id").get_to(v.id);
  j.at("text").get_to(v.text);
  v.reference_answer = opt_field<std::string>(j, "reference_answer");
}

void to_json(json& j, const ToolCall& v) {
  j = json{{"tool_name", v.tool_name}, {"arguments", v.arguments}};
}

void from_json(const json& j, ToolCall& v) {
  j.at("tool_name").get_to(v.tool_name);
  v.arguments = j.value("arguments", json::object());
}

void to_json(json& j, const FinalAnswer& v) { j = json{{"text", v.text}}; }

void from_json(const json& j, FinalAnswer& v) { j.at("text").get_to(v.text); }

void to_json(json& j, const Action& v) {
  if (const auto* call = std::get_if<ToolCall>(&v)) {
    j = json{{"tool_call", *call}};
  } else {
    j = json{{"final_answer", std::get<FinalAnswer>(v)}};
  }
}

void from_json(const json& j, Action& v) {
  const bool has_call = j.contains("tool_call");
  const bool has_answer = j.contains("final_answer");
  if (has_call == has_answer) {
    throw Error(Errc::invalid_argument, "action must hold exactly one of tool_call / final_answer");
  }
  if (has_call) {
    v = j.at("tool_call").get<ToolCall>();
  } else {
    v = j.at("final_answer").get<FinalAnswer>();
  }
}

void to_json(json& j, const RoundResponse& v) {
  j = json{{"think", v.think}, {"report", v.report}, {"action", v.action}};
}

void from_json(const json& j, RoundResponse& v) {
  j.at("think").get_to(v.think);
  j.at("report").get_to(v.report);
  v.action = j.at("action").get<Action>();
}

void to_json(json& j, const ToolResponse& v) {
  j = json{{"tool_name", v.tool_name},
           {"status", std::string(to_string(v.status))},
           {"content", v.content},
           {"latency_ms", v.latency_ms}};
}

void from_json(const json& j, ToolResponse& v) {
  j.at("tool_name").get_to(v.tool_name);
  v.status = tool_status_from_string(j.at("status").get<std::string>());
  j.at("content").get_to(v.content);
  j.at("latency_ms").get_to(v.latency_ms);
}

void to_json(json& j, const Workspace& v) {
  j = json{{"question", v.question}, {"round_index", v.round_index}, {"prev_report", v.prev_report}};
  put_opt(j, "prev_action", v.prev_action);
  put_opt(j, "prev_tool_response", v.prev_tool_response);
}

void from_json(const json& j, Workspace& v) {
  j.at("question").get_to(v.question);
  j.at("round_index").get_to(v.round_index);
  j.at("prev_report").get_to(v.prev_report);
  v.prev_action = opt_field<Action>(j, "prev_action");
  v.prev_tool_response = opt_field<ToolResponse>(j, "prev_tool_response");
}

void to_json(json& j, const RoundRecord& v) {
  j = json{{"workspace", v.workspace},
           {"response", v.response},
           {"raw_reply", v.raw_reply},
           {"prompt_chars", v.prompt_chars},
           {"prompt_fingerprint", v.prompt_fingerprint},
           {"forced_final", v.forced_final}};
  put_opt(j, "tool_response", v.tool_response);
}

void from_json(const json& j, RoundRecord& v) {
  j.at("workspace").get_to(v.workspace);
  j.at("response").get_to(v.response);
  v.tool_response = opt_field<ToolResponse>(j, "tool_response");
  v.raw_reply = j.value("raw_reply", std::string{});
  v.prompt_chars = j.value("prompt_chars", std::int64_t{0});
  v.prompt_fingerprint = j.value("prompt_fingerprint", std::string{});
  v.forced_final = j.value("forced_final", false);
}

void to_json(json& j, const SamplingParams& v) {
  j = json{{"temperature", v.temperature}, {"top_p", v.top_p}, {"max_rounds", v.max_rounds}, {"seed", v.seed}};
}

void from_json(const json& j, SamplingParams& v) {
  const SamplingParams d;
  v.temperature = j.value("temperature", d.temperature);
  v.top_p = j.value("top_p", d.top_p);
  v.max_rounds = j.value("max_rounds", d.max_rounds);
  v.seed = j.value("seed", d.seed);
}

void to_json(json& j, const Trajectory& v) {
  j = json{{"id", v.id},
           {"question", v.question},
           {"mode", std::string(to_string(v.mode))},
           {"rounds", v.rounds},
           {"termination", std::string(to_string(v.termination))},
           {"sampling", v.sampling}};
  put_opt(j, "final_answer", v.final_answer);
  put_opt(j, "failure_detail", v.failure_detail);
}

void from_json(const json& j, Trajectory& v) {
  j.at("id").get_to(v.id);
  j.at("question").get_to(v.question);
  v.mode = run_mode_from_string(j.value("mode", std::string("iter")));
  j.at("rounds").get_to(v.rounds);
  v.final_answer = opt_field<std::string>(j, "final_answer");
  v.termination = termination_from_string(j.at("termination").get<std::string>());
  j.at("sampling").get_to(v.sampling);
  v.failure_detail = opt_field<std::string>(j, "failure_detail");
}

}  // namespace iterresearch
