#include "iterresearch/engine.hpp"

#include <algorithm>

#include <spdlog/spdlog.h>

namespace iterresearch {

using std::chrono::milliseconds;

void validate_budget(const EngineBudget& b) {
  if (b.max_rounds < 1) throw Error(Errc::invalid_argument, "max_rounds must be >= 1");
  if (b.max_wall_time.count() <= 0) throw Error(Errc::invalid_argument, "max_wall_time must be positive");
  if (b.report_char_cap == 0) throw Error(Errc::invalid_argument, "report_char_cap must be positive");
  if (b.parse_retry_limit < 0) throw Error(Errc::invalid_argument, "parse_retry_limit must be >= 0");
}

void to_json(json& j, const EngineBudget& b) {
  j = json{{"max_rounds", b.max_rounds},
           {"max_wall_time_ms", b.max_wall_time.count()},
           {"report_char_cap", b.report_char_cap},
           {"parse_retry_limit", b.parse_retry_limit},
           {"context_char_cap", b.context_char_cap}};
}

void from_json(const json& j, EngineBudget& b) {
  const EngineBudget d;
  b.max_rounds = j.value("max_rounds", d.max_rounds);
  b.max_wall_time = milliseconds(j.value("max_wall_time_ms", d.max_wall_time.count()));
  b.report_char_cap = j.value("report_char_cap", d.report_char_cap);
  b.parse_retry_limit = j.value("parse_retry_limit", d.parse_retry_limit);
  b.context_char_cap = j.value("context_char_cap", d.context_char_cap);
}

void to_json(json& j, const RoundTiming& t) {
  j = json{{"trajectory_id", t.trajectory_id}, {"round_index", t.round_index}, {"attempts", t.attempts},
           {"prompt_chars", t.prompt_chars},   {"model_ms", t.model_ms},       {"tool_ms", t.tool_ms}};
}

std::string default_trajectory_id(const Question& q, RunMode mode, std::int64_t seed) {
  return q.id + ":" + std::string(to_string(mode)) + ":" + std::to_string(seed);
}

Workspace transition(const Workspace& ws, const RoundResponse& response, const ToolResponse& tool_response) {
  if (!is_tool_call(response.action)) throw Error(Errc::terminal_action, "a final answer has no successor state");
  Workspace next;
  next.question = ws.question;
  next.round_index = ws.round_index + 1;
  next.prev_report = response.report;
  next.prev_action = response.action;
  next.prev_tool_response = tool_response;
  return next;
}

namespace {

std::int64_t elapsed_ms(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration_cast<milliseconds>(std::chrono::steady_clock::now() - since).count();
}

Trajectory run_loop(RunMode mode, const Question& question, const EngineBudget& budget, ChatBackend& backend,
                    const ToolRegistry& registry, const SamplingParams& sampling, const EngineOptions& options) {
  validate_budget(budget);
  validate_sampling(sampling);
  if (trim(question.text).empty()) throw Error(Errc::invalid_argument, "question text is empty");

  Trajectory t;
  t.id = options.trajectory_id.empty() ? default_trajectory_id(question, mode, sampling.seed) : options.trajectory_id;
  t.question = question;
  t.mode = mode;
  t.sampling = sampling;

  const int round_cap = std::min(budget.max_rounds, sampling.max_rounds);
  const auto started = std::chrono::steady_clock::now();
  const auto& specs = registry.specs();
  Workspace ws = initial_workspace(question);
  std::vector<MonoTurn> history;

  const auto stop = [&](Termination why, std::optional<std::string> detail = std::nullopt) {
    t.termination = why;
    t.failure_detail = std::move(detail);
  };

  while (!t.terminated()) {
    const bool forced = ws.round_index > round_cap || elapsed_ms(started) >= budget.max_wall_time.count();
    PromptMessages base;
    if (mode == RunMode::mono) {
      base = render_mono(question, specs, history, forced);
    } else {
      base = forced ? render_forced_final(ws) : render_workspace(ws, specs);
    }
    RoundTiming timing{t.id, ws.round_index, 0, prompt_chars(base), 0, 0};

    if (mode == RunMode::mono && budget.context_char_cap > 0 &&
        static_cast<std::size_t>(timing.prompt_chars) > budget.context_char_cap) {
      stop(Termination::context_overflow, "prompt of " + std::to_string(timing.prompt_chars) +
                                              " chars exceeds the context cap of " +
                                              std::to_string(budget.context_char_cap));
      break;
    }

    // A forced-final prompt gets a single attempt; regular rounds get the repair retries.
    const int attempts = forced ? 1 : 1 + budget.parse_retry_limit;
    PromptMessages messages = base;
    std::optional<RoundResponse> response;
    std::string raw, last_error;
    const auto model_started = std::chrono::steady_clock::now();
    try {
      for (int a = 0; a < attempts && !response; ++a) {
        ++timing.attempts;
        raw = backend.complete(messages, sampling);
        auto parsed = parse_round_response(raw);
        if (auto* ok = std::get_if<RoundResponse>(&parsed)) {
          response = std::move(*ok);
        } else {
          last_error = std::get<ParseError>(parsed).describe();
          spdlog::debug("{} round {}: {}", t.id, ws.round_index, last_error);
          messages = with_repair(base, raw, last_error);
        }
      }
    } catch (const Error& e) {
      stop(Termination::backend_failure, std::string(errc_name(e.code())) + ": " + e.what());
      break;
    } catch (const std::exception& e) {
      stop(Termination::backend_failure, e.what());
      break;
    }
    timing.model_ms = elapsed_ms(model_started);

    if (!response) {
      if (forced) {
        stop(Termination::budget_exhausted, "answer-only reply did not parse: " + last_error);
      } else {
        stop(Termination::parse_failure, last_error);
      }
      break;
    }
    if (response->report.size() > budget.report_char_cap) {
      response->report = truncate_utf8(response->report, budget.report_char_cap, kReportTruncationMarker);
    }

    RoundRecord record;
    record.workspace = ws;
    record.response = *response;
    record.raw_reply = raw;
    record.prompt_chars = timing.prompt_chars;
    record.prompt_fingerprint = prompt_fingerprint(base);
    record.forced_final = forced;

    if (const auto* answer = std::get_if<FinalAnswer>(&response->action)) {
      t = append_round(std::move(t), std::move(record));
      t.final_answer = answer->text;
      stop(forced ? Termination::budget_exhausted : Termination::final_answer);
    } else if (forced) {
      stop(Termination::budget_exhausted, "answer-only reply requested a tool call");
    } else {
      const auto tool_started = std::chrono::steady_clock::now();
      auto observation = execute(std::get<ToolCall>(response->action), registry);
      timing.tool_ms = elapsed_ms(tool_started);
      record.tool_response = observation;
      t = append_round(std::move(t), std::move(record));
      history.push_back({raw, observation});
      ws = transition(ws, *response, observation);
    }
    if (options.on_round) options.on_round(timing);
  }
  return t;
}

}  // namespace

Trajectory run_iter_research(const Question& question, const EngineBudget& budget, ChatBackend& backend,
                             const ToolRegistry& registry, const SamplingParams& sampling,
                             const EngineOptions& options) {
  return run_loop(RunMode::iter, question, budget, backend, registry, sampling, options);
}

Trajectory run_mono_baseline(const Question& question, const EngineBudget& budget, ChatBackend& backend,
                             const ToolRegistry& registry, const SamplingParams& sampling,
                             const EngineOptions& options) {
  return run_loop(RunMode::mono, question, budget, backend, registry, sampling, options);
}

Trajectory run_research(RunMode mode, const Question& question, const EngineBudget& budget, ChatBackend& backend,
                        const ToolRegistry& registry, const SamplingParams& sampling,
                        const EngineOptions& options) {
  return run_loop(mode, question, budget, backend, registry, sampling, options);
}

}  // namespace iterresearch
