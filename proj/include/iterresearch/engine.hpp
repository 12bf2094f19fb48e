#pragma once

#include <chrono>
#include <functional>
#include <string>

#include "iterresearch/backend.hpp"
#include "iterresearch/core.hpp"
#include "iterresearch/tools.hpp"

namespace iterresearch {

inline constexpr std::string_view kReportTruncationMarker = "\n[report truncated]";

struct EngineBudget {
  int max_rounds = 100;
  std::chrono::milliseconds max_wall_time{3'600'000};
  std::size_t report_char_cap = 8000;
  int parse_retry_limit = 2;
  // Mono mode only: rendered prompts above this many characters end the run. 0 disables the cap.
  std::size_t context_char_cap = 0;
};

void validate_budget(const EngineBudget& b);
void to_json(json& j, const EngineBudget& b);
void from_json(const json& j, EngineBudget& b);

/// Per-round timing emitted to the run log; not part of the trajectory.
struct RoundTiming {
  std::string trajectory_id;
  int round_index = 0;
  int attempts = 0;
  std::int64_t prompt_chars = 0;
  std::int64_t model_ms = 0;
  std::int64_t tool_ms = 0;
};

void to_json(json& j, const RoundTiming& t);

struct EngineOptions {
  // Empty means default_trajectory_id(question, mode, seed).
  std::string trajectory_id;
  std::function<void(const RoundTiming&)> on_round;
};

std::string default_trajectory_id(const Question& q, RunMode mode, std::int64_t seed);

/// Next Markov state: keeps the question, takes the new report, action and tool response, and drops
/// everything else (think text and the previous round's fields). Throws Error(terminal_action) for
/// a final answer.
Workspace transition(const Workspace& ws, const RoundResponse& response, const ToolResponse& tool_response);

/// render -> complete -> parse -> execute -> transition until a final answer or a budget stop.
/// Failure modes are reported through Trajectory::termination, never thrown.
Trajectory run_iter_research(const Question& question, const EngineBudget& budget, ChatBackend& backend,
                             const ToolRegistry& registry, const SamplingParams& sampling,
                             const EngineOptions& options = {});

/// Same loop, but every prompt carries the full history of raw replies and tool responses.
Trajectory run_mono_baseline(const Question& question, const EngineBudget& budget, ChatBackend& backend,
                             const ToolRegistry& registry, const SamplingParams& sampling,
                             const EngineOptions& options = {});

Trajectory run_research(RunMode mode, const Question& question, const EngineBudget& budget, ChatBackend& backend,
                        const ToolRegistry& registry, const SamplingParams& sampling,
                        const EngineOptions& options = {});

}  // namespace iterresearch
