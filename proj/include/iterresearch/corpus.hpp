#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "iterresearch/core.hpp"
#include "iterresearch/protocol.hpp"

namespace iterresearch {

/// One training example: the state a round was generated from and the model's raw reply to it.
/// Tool output is context only and never part of response_text.
struct TrainingSample {
  std::string question_id;
  int rollout_index = 1;  // g, 1-based within the question group
  int round_index = 1;    // j
  std::string state_render;
  std::string response_text;
  double reward = 0.0;
  std::optional<double> advantage;

  bool operator==(const TrainingSample&) const = default;
};

struct CorpusStats {
  int num_questions = 0;
  int rollouts_per_question = 0;  // largest G over questions
  std::int64_t total_samples = 0;
  std::int64_t retained_samples = 0;
  std::int64_t dropped = 0;
  std::int64_t skipped_trajectories = 0;  // trajectories with no rounds
  // N x G count a mono-context corpus would yield, and total_samples relative to it.
  std::int64_t mono_samples = 0;
  double amplification = 0.0;
};

struct GspoConfig {
  double epsilon = 0.2;
  int dp_size = 8;
  double sigma_floor = 1e-6;
};

void validate_gspo(const GspoConfig& c);
void to_json(json& j, const TrainingSample& s);
void from_json(const json& j, TrainingSample& s);
void to_json(json& j, const CorpusStats& s);
void to_json(json& j, const GspoConfig& c);
void from_json(const json& j, GspoConfig& c);

/// Decides whether `predicted` answers `question` given `reference`.
using AnswerJudge =
    std::function<bool(const std::string& question, const std::string& predicted, const std::string& reference)>;

struct CorrectnessPolicy {
  // Normalized exact match only; the judge is never consulted.
  bool strict_exact = true;
  AnswerJudge judge;
};

/// Exact match after normalize_answer() short-circuits; otherwise the judge decides unless strict.
/// Throws Error(missing_reference).
bool trajectory_correct(const Trajectory& t, const CorrectnessPolicy& policy);

/// Keeps answered trajectories (final_answer, or budget_exhausted with an answer) judged correct.
/// Order-preserving and idempotent. Throws Error(missing_reference).
std::vector<Trajectory> rft_filter(const std::vector<Trajectory>& trajectories, const CorrectnessPolicy& policy = {});

/// Rollout index g of each trajectory: its 1-based position among trajectories of the same question.
std::vector<int> rollout_indices(const std::vector<Trajectory>& trajectories);

/// The exact prompt a round was generated from, rebuilt from the trajectory.
PromptMessages rebuild_round_prompt(const Trajectory& t, std::size_t round_position, const std::vector<ToolSpec>& tools);

/// One sample per round. The state is re-rendered and checked against the fingerprint logged at
/// rollout time (Error(render_mismatch)); trajectories without rounds raise Error(invalid_trajectory).
std::vector<TrainingSample> decompose_rounds(const std::vector<Trajectory>& trajectories,
                                             const std::vector<ToolSpec>& tools);

/// Broadcasts each trajectory's terminal correctness (1 or 0) to all of its samples.
std::vector<TrainingSample> assign_rewards(std::vector<TrainingSample> samples,
                                           const std::vector<Trajectory>& trajectories,
                                           const CorrectnessPolicy& policy = {});

/// (r - mean) / population std over the whole group; all zero when std < sigma_floor.
/// Throws Error(empty_group), or Error(invalid_argument) on mixed question ids.
std::vector<TrainingSample> normalize_advantages(std::vector<TrainingSample> group, double sigma_floor = 1e-6);

/// Keeps floor(n / dp) * dp samples chosen by a seeded uniform shuffle, in input order.
/// Throws Error(insufficient_samples) when n < dp.
std::vector<TrainingSample> downsample(const std::vector<TrainingSample>& samples, int dp_size, std::uint64_t seed);

/// Mean over samples of min(rho * A, clip(rho, 1 - eps, 1 + eps) * A).
double gspo_surrogate(const std::vector<double>& advantages, const std::vector<double>& ratios, double epsilon);

struct CorpusOptions {
  GspoConfig gspo;
  std::uint64_t seed = 0;
  CorrectnessPolicy correctness;
  // Filter to correct trajectories first (SFT corpus) instead of keeping all rollouts (RL corpus).
  bool rft_only = false;
};

struct Corpus {
  std::vector<TrainingSample> samples;
  CorpusStats stats;
};

/// decompose -> rewards -> downsample -> per-question advantage normalization.
Corpus build_corpus(const std::vector<Trajectory>& trajectories, const std::vector<ToolSpec>& tools,
                    const CorpusOptions& options);

}  // namespace iterresearch
