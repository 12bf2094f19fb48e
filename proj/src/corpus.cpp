#include "iterresearch/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>

namespace iterresearch {

void validate_gspo(const GspoConfig& c) {
  if (!(c.epsilon > 0.0 && c.epsilon < 1.0)) throw Error(Errc::invalid_argument, "epsilon must lie in (0, 1)");
  if (c.dp_size < 1) throw Error(Errc::invalid_argument, "dp_size must be >= 1");
  if (!(c.sigma_floor >= 0.0)) throw Error(Errc::invalid_argument, "sigma_floor must be >= 0");
}

void to_json(json& j, const TrainingSample& s) {
  j = json{{"question_id", s.question_id},   {"rollout_index", s.rollout_index}, {"round_index", s.round_index},
           {"state_render", s.state_render}, {"response_text", s.response_text}, {"reward", s.reward}};
  if (s.advantage) {
    j["advantage"] = *s.advantage;
  } else {
    j["advantage"] = nullptr;
  }
}

void from_json(const json& j, TrainingSample& s) {
  j.at("question_id").get_to(s.question_id);
  j.at("rollout_index").get_to(s.rollout_index);
  j.at("round_index").get_to(s.round_index);
  j.at("state_render").get_to(s.state_render);
  j.at("response_text").get_to(s.response_text);
  s.reward = j.value("reward", 0.0);
  if (auto it = j.find("advantage"); it != j.end() && !it->is_null()) {
    s.advantage = it->get<double>();
  } else {
    s.advantage.reset();
  }
}

void to_json(json& j, const CorpusStats& s) {
  j = json{{"num_questions", s.num_questions},
           {"rollouts_per_question", s.rollouts_per_question},
           {"total_samples", s.total_samples},
           {"retained_samples", s.retained_samples},
           {"dropped", s.dropped},
           {"skipped_trajectories", s.skipped_trajectories},
           {"mono_samples", s.mono_samples},
           {"amplification", s.amplification}};
}

void to_json(json& j, const GspoConfig& c) {
  j = json{{"epsilon", c.epsilon}, {"dp_size", c.dp_size}, {"sigma_floor", c.sigma_floor}};
}

void from_json(const json& j, GspoConfig& c) {
  const GspoConfig d;
  c.epsilon = j.value("epsilon", d.epsilon);
  c.dp_size = j.value("dp_size", d.dp_size);
  c.sigma_floor = j.value("sigma_floor", d.sigma_floor);
}

bool trajectory_correct(const Trajectory& t, const CorrectnessPolicy& policy) {
  if (!t.question.reference_answer) {
    throw Error(Errc::missing_reference, "question " + t.question.id + " has no reference answer");
  }
  if (!t.final_answer) return false;
  if (normalize_answer(*t.final_answer) == normalize_answer(*t.question.reference_answer)) return true;
  if (policy.strict_exact) return false;
  if (!policy.judge) throw Error(Errc::invalid_argument, "non-strict correctness needs a judge");
  return policy.judge(t.question.text, *t.final_answer, *t.question.reference_answer);
}

std::vector<Trajectory> rft_filter(const std::vector<Trajectory>& trajectories, const CorrectnessPolicy& policy) {
  for (const auto& t : trajectories) {
    if (!t.question.reference_answer) {
      throw Error(Errc::missing_reference, "question " + t.question.id + " has no reference answer");
    }
  }
  std::vector<Trajectory> kept;
  for (const auto& t : trajectories) {
    const bool answered = t.termination == Termination::final_answer ||
                          (t.termination == Termination::budget_exhausted && t.final_answer.has_value());
    if (answered && trajectory_correct(t, policy)) kept.push_back(t);
  }
  return kept;
}

std::vector<int> rollout_indices(const std::vector<Trajectory>& trajectories) {
  std::map<std::string, int> seen;
  std::vector<int> out;
  out.reserve(trajectories.size());
  for (const auto& t : trajectories) out.push_back(++seen[t.question.id]);
  return out;
}

PromptMessages rebuild_round_prompt(const Trajectory& t, std::size_t pos, const std::vector<ToolSpec>& tools) {
  if (pos >= t.rounds.size()) throw Error(Errc::invalid_argument, "round position out of range");
  const auto& record = t.rounds[pos];
  if (t.mode == RunMode::iter) {
    return record.forced_final ? render_forced_final(record.workspace) : render_workspace(record.workspace, tools);
  }
  std::vector<MonoTurn> history;
  for (std::size_t i = 0; i < pos; ++i) history.push_back({t.rounds[i].raw_reply, t.rounds[i].tool_response});
  return render_mono(t.question, tools, history, record.forced_final);
}

std::vector<TrainingSample> decompose_rounds(const std::vector<Trajectory>& trajectories,
                                             const std::vector<ToolSpec>& tools) {
  const auto g = rollout_indices(trajectories);
  std::vector<TrainingSample> out;
  for (std::size_t ti = 0; ti < trajectories.size(); ++ti) {
    const auto& t = trajectories[ti];
    if (t.rounds.empty()) throw Error(Errc::invalid_trajectory, "trajectory " + t.id + " has no rounds");
    for (std::size_t r = 0; r < t.rounds.size(); ++r) {
      const auto& record = t.rounds[r];
      const auto prompt = rebuild_round_prompt(t, r, tools);
      if (!record.prompt_fingerprint.empty() && record.prompt_fingerprint != prompt_fingerprint(prompt)) {
        throw Error(Errc::render_mismatch,
                    "trajectory " + t.id + " round " + std::to_string(r + 1) + " does not re-render to its logged prompt");
      }
      TrainingSample s;
      s.question_id = t.question.id;
      s.rollout_index = g[ti];
      s.round_index = record.workspace.round_index;
      s.state_render = dump_json(messages_to_json(prompt));
      s.response_text = record.raw_reply.empty() ? emit_round_response(record.response) : record.raw_reply;
      out.push_back(std::move(s));
    }
  }
  return out;
}

std::vector<TrainingSample> assign_rewards(std::vector<TrainingSample> samples,
                                           const std::vector<Trajectory>& trajectories,
                                           const CorrectnessPolicy& policy) {
  const auto g = rollout_indices(trajectories);
  std::map<std::pair<std::string, int>, double> reward;
  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    reward[{trajectories[i].question.id, g[i]}] = trajectory_correct(trajectories[i], policy) ? 1.0 : 0.0;
  }
  for (auto& s : samples) {
    auto it = reward.find({s.question_id, s.rollout_index});
    if (it == reward.end()) {
      throw Error(Errc::invalid_argument, "sample " + s.question_id + "/" + std::to_string(s.rollout_index) +
                                              " has no matching trajectory");
    }
    s.reward = it->second;
  }
  return samples;
}

std::vector<TrainingSample> normalize_advantages(std::vector<TrainingSample> group, double sigma_floor) {
  if (group.empty()) throw Error(Errc::empty_group, "advantage group is empty");
  for (const auto& s : group) {
    if (s.question_id != group.front().question_id) {
      throw Error(Errc::invalid_argument, "advantage group mixes question ids");
    }
  }
  const double n = static_cast<double>(group.size());
  double mean = 0.0;
  for (const auto& s : group) mean += s.reward;
  mean /= n;
  double var = 0.0;
  for (const auto& s : group) var += (s.reward - mean) * (s.reward - mean);
  const double sigma = std::sqrt(var / n);
  for (auto& s : group) s.advantage = sigma < sigma_floor ? 0.0 : (s.reward - mean) / sigma;
  return group;
}

std::vector<TrainingSample> downsample(const std::vector<TrainingSample>& samples, int dp_size, std::uint64_t seed) {
  if (dp_size < 1) throw Error(Errc::invalid_argument, "dp_size must be >= 1");
  const auto dp = static_cast<std::size_t>(dp_size);
  if (samples.size() < dp) {
    throw Error(Errc::insufficient_samples, std::to_string(samples.size()) + " samples cannot fill one batch of " +
                                                std::to_string(dp));
  }
  const std::size_t keep = samples.size() / dp * dp;
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  // Fisher-Yates with an explicit unbiased bound so results do not depend on the standard library.
  std::mt19937_64 rng(seed);
  for (std::size_t i = order.size() - 1; i > 0; --i) {
    const std::uint64_t bound = i + 1;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t x;
    do {
      x = rng();
    } while (x >= limit);
    std::swap(order[i], order[x % bound]);
  }
  order.resize(keep);
  std::sort(order.begin(), order.end());
  std::vector<TrainingSample> out;
  out.reserve(keep);
  for (auto i : order) out.push_back(samples[i]);
  return out;
}

double gspo_surrogate(const std::vector<double>& advantages, const std::vector<double>& ratios, double epsilon) {
  if (advantages.size() != ratios.size()) {
    throw Error(Errc::length_mismatch, std::to_string(advantages.size()) + " advantages vs " +
                                           std::to_string(ratios.size()) + " ratios");
  }
  if (advantages.empty()) throw Error(Errc::empty_input, "no samples");
  double sum = 0.0;
  for (std::size_t i = 0; i < ratios.size(); ++i) {
    const double rho = ratios[i];
    if (!(rho > 0.0)) throw Error(Errc::non_positive_ratio, "ratio " + std::to_string(i) + " is not positive");
    const double a = advantages[i];
    const double clipped = std::clamp(rho, 1.0 - epsilon, 1.0 + epsilon);
    sum += std::min(rho * a, clipped * a);
  }
  return sum / static_cast<double>(ratios.size());
}

Corpus build_corpus(const std::vector<Trajectory>& trajectories, const std::vector<ToolSpec>& tools,
                    const CorpusOptions& options) {
  validate_gspo(options.gspo);
  Corpus corpus;
  std::vector<Trajectory> usable;
  for (const auto& t : options.rft_only ? rft_filter(trajectories, options.correctness) : trajectories) {
    if (t.rounds.empty()) {
      ++corpus.stats.skipped_trajectories;
    } else {
      usable.push_back(t);
    }
  }

  auto samples = assign_rewards(decompose_rounds(usable, tools), usable, options.correctness);
  std::map<std::string, int> rollouts;
  for (const auto& t : usable) ++rollouts[t.question.id];
  corpus.stats.num_questions = static_cast<int>(rollouts.size());
  for (const auto& [q, n] : rollouts) corpus.stats.rollouts_per_question = std::max(corpus.stats.rollouts_per_question, n);
  corpus.stats.total_samples = static_cast<std::int64_t>(samples.size());
  corpus.stats.mono_samples = static_cast<std::int64_t>(usable.size());
  corpus.stats.amplification =
      usable.empty() ? 0.0 : static_cast<double>(samples.size()) / static_cast<double>(usable.size());

  auto kept = downsample(samples, options.gspo.dp_size, options.seed);
  corpus.stats.retained_samples = static_cast<std::int64_t>(kept.size());
  corpus.stats.dropped = corpus.stats.total_samples - corpus.stats.retained_samples;

  // Every retained round of every rollout of a question forms one advantage group.
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < kept.size(); ++i) groups[kept[i].question_id].push_back(i);
  for (const auto& [q, idx] : groups) {
    std::vector<TrainingSample> group;
    for (auto i : idx) group.push_back(kept[i]);
    group = normalize_advantages(std::move(group), options.gspo.sigma_floor);
    for (std::size_t k = 0; k < idx.size(); ++k) kept[idx[k]] = std::move(group[k]);
  }
  corpus.samples = std::move(kept);
  return corpus;
}

}  // namespace iterresearch
