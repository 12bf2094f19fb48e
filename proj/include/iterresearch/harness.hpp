#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "iterresearch/corpus.hpp"
#include "iterresearch/synthesis.hpp"

namespace iterresearch {

struct BenchmarkItem {
  std::string id;
  std::string question_text;
  std::string reference_answer;
  std::vector<std::string> tags;

  bool operator==(const BenchmarkItem&) const = default;
};

/// JSONL, one object per line: {"id", "question", "answer", "tags"?}. Blank lines are skipped.
/// Throws Error(dataset_parse) with the line number on malformed lines or duplicate ids.
std::vector<BenchmarkItem> parse_dataset(const std::string& text);
std::vector<BenchmarkItem> load_dataset(const std::string& path);

/// Per problem, the ordered correctness flags of its attempts.
using AttemptMatrix = std::vector<std::vector<bool>>;

/// Fraction of problems with a correct answer among their first k attempts.
/// Throws Error(invalid_argument) for k < 1 or an empty matrix, Error(insufficient_attempts) when a
/// problem has fewer than k attempts.
double pass_at_k(const AttemptMatrix& matrix, int k);

enum class Verdict { correct, incorrect, unparseable };

/// First non-empty line, upper-cased, leading punctuation stripped: INCORRECT... -> incorrect,
/// CORRECT... -> correct, anything else -> unparseable.
Verdict parse_verdict(std::string_view reply);

PromptMessages render_judge_prompt(const std::string& question, const std::string& predicted,
                                   const std::string& reference);

/// Exact match after normalization and empty predictions are decided without a backend call.
/// Otherwise asks `backend`; an unparseable verdict is retried once and then counts as incorrect.
bool judge_answer(const std::string& question, const std::string& predicted, const std::string& reference,
                  ChatBackend& backend);

AnswerJudge make_llm_judge(std::shared_ptr<ChatBackend> backend);

struct TrajectoryStats {
  std::size_t trajectories = 0;
  double avg_turns = 0.0;
  int max_turns = 0;
  std::int64_t tool_calls = 0;
  std::map<std::string, std::int64_t> tool_counts;
  // Percentage of all tool calls; empty when there are none.
  std::map<std::string, double> tool_frequency;
};

void to_json(json& j, const TrajectoryStats& s);

/// Throws Error(empty_input).
TrajectoryStats trajectory_stats(const std::vector<Trajectory>& trajectories);

struct BenchMode {
  enum class Kind { iter, mono, synthesis } kind = Kind::iter;
  int n = 1;  // research agents per item, synthesis only

  bool operator==(const BenchMode&) const = default;
};

/// "iter", "mono", "synthesis-<n>". Throws Error(invalid_argument).
BenchMode parse_bench_mode(std::string_view text);
std::string to_string(const BenchMode& mode);

struct BenchConfig {
  BenchMode mode;
  EngineBudget budget;
  SamplingParams sampling;
  // Research agents running at once within one item, and items evaluated at once.
  int agent_permits = 4;
  int item_permits = 1;
  bool count_forced_final = true;
};

void validate_bench_config(const BenchConfig& c);
void to_json(json& j, const BenchConfig& c);
/// Reads budget/sampling/permits/count_forced_final; the mode is always set by the caller.
void from_json(const json& j, BenchConfig& c);

struct ItemVerdict {
  std::string item_id;
  std::string predicted;
  std::string reference;
  bool correct = false;
  int research_runs = 0;
  int synthesis_calls = 0;
  std::string failure;  // empty unless the item could not be run or judged

  bool operator==(const ItemVerdict&) const = default;
};

void to_json(json& j, const ItemVerdict& v);
void from_json(const json& j, ItemVerdict& v);

struct RunReport {
  std::string mode;
  int num_items = 0;
  double pass_at_1 = 0.0;
  std::vector<ItemVerdict> verdicts;  // dataset order
  TrajectoryStats analytics;
  json config;
  // Items found already persisted when the run started. Not part of the canonical report.
  std::vector<std::string> skipped_items;
};

/// Canonical form: everything except skipped_items.
void to_json(json& j, const RunReport& r);

struct BenchBackends {
  std::function<std::shared_ptr<ChatBackend>(const BenchmarkItem&, int agent_index)> research;
  // Defaults to research(item, 0) when unset.
  std::function<std::shared_ptr<ChatBackend>(const BenchmarkItem&)> synthesis;
  std::function<std::shared_ptr<ChatBackend>(const BenchmarkItem&)> judge;
};

/// Store layout under out_dir: trajectories.jsonl, outcomes.jsonl, synthesis.jsonl, verdicts.jsonl
/// (one line per item, written last) and report.json. Items that already have a verdict are skipped;
/// store lines of items without a verdict are discarded before the run resumes.
RunReport run_benchmark(const std::vector<BenchmarkItem>& dataset, const BenchConfig& config,
                        const BenchBackends& backends, const ToolRegistry& registry, const std::string& out_dir);

/// Rebuilds the report from the persisted store alone.
RunReport report_from_store(const std::vector<BenchmarkItem>& dataset, const BenchConfig& config,
                            const std::string& out_dir);

/// All trajectories persisted under out_dir, in store order.
std::vector<Trajectory> load_stored_trajectories(const std::string& out_dir);

/// Reads a JSONL file of trajectories, either bare or wrapped as {"trajectory": ...}.
std::vector<Trajectory> load_trajectories(const std::string& path);

/// Runs synthesis-n for each n into out_dir/n<n>.
std::vector<RunReport> run_sweep(const std::vector<BenchmarkItem>& dataset, const std::vector<int>& ns,
                                 const BenchConfig& config, const BenchBackends& backends,
                                 const ToolRegistry& registry, const std::string& out_dir);

}  // namespace iterresearch
