#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "iterresearch/engine.hpp"

namespace iterresearch {

struct ResearchOutcome {
  int agent_index = 1;
  std::string final_report;
  std::string answer;
  std::string trajectory_id;
  // Set when the agent produced no usable answer; flagged outcomes are left out of synthesis.
  bool flagged = false;

  bool operator==(const ResearchOutcome&) const = default;
};

struct SynthesisResult {
  std::string final_answer;
  int outcomes_used = 0;
  std::int64_t synthesis_prompt_chars = 0;
  std::string justification;
  // True when a single usable outcome was returned without a backend call.
  bool bypassed = false;

  bool operator==(const SynthesisResult&) const = default;
};

void to_json(json& j, const ResearchOutcome& o);
void from_json(const json& j, ResearchOutcome& o);
void to_json(json& j, const SynthesisResult& r);
void from_json(const json& j, SynthesisResult& r);

struct ResearchConfig {
  EngineBudget budget;
  // Agent u runs with seed = sampling.seed + u.
  SamplingParams sampling;
  RunMode mode = RunMode::iter;
  int permits = 4;
  // When false, answers produced only by the answer-only prompt after budget exhaustion are flagged.
  bool count_forced_final = true;
  // Called from agent threads; must be thread-safe.
  std::function<void(const RoundTiming&)> on_round;
};

/// Backend for research agent `agent_index` (1-based). May return the same shared instance.
using BackendProvider = std::function<std::shared_ptr<ChatBackend>(int agent_index)>;

struct ParallelResearch {
  std::vector<Trajectory> trajectories;  // agent_index order
  std::vector<ResearchOutcome> outcomes;
};

ResearchOutcome outcome_from_trajectory(const Trajectory& t, int agent_index, bool count_forced_final = true);

/// Runs n independent research agents, at most `permits` at a time. Results are ordered by
/// agent_index regardless of completion order.
ParallelResearch run_parallel_research(const Question& question, int n, const ResearchConfig& config,
                                       const BackendProvider& backends, const ToolRegistry& registry);

/// Prompt over the (final report, answer) pairs of the given outcomes; trajectories never enter it.
PromptMessages render_synthesis_prompt(const Question& question, const std::vector<ResearchOutcome>& outcomes);

/// Bypasses the backend when exactly one outcome is usable. Throws Error(no_usable_outcomes) when none are.
SynthesisResult synthesize(const Question& question, const std::vector<ResearchOutcome>& outcomes, ChatBackend& backend,
                           const SamplingParams& sampling = {});

struct ResearchSynthesisRun {
  ParallelResearch research;
  SynthesisResult synthesis;
  PromptMessages synthesis_prompt;  // empty when bypassed
};

ResearchSynthesisRun run_research_synthesis(const Question& question, int n, const ResearchConfig& config,
                                            const BackendProvider& research_backends, ChatBackend& synthesis_backend,
                                            const ToolRegistry& registry);

}  // namespace iterresearch
