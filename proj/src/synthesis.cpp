#include "iterresearch/synthesis.hpp"

#include <algorithm>
#include <atomic>
#include <thread>

#include <spdlog/spdlog.h>

#include "iterresearch/prompt_templates.hpp"

namespace iterresearch {

void to_json(json& j, const ResearchOutcome& o) {
  j = json{{"agent_index", o.agent_index},
           {"final_report", o.final_report},
           {"answer", o.answer},
           {"trajectory_id", o.trajectory_id},
           {"flagged", o.flagged}};
}

void from_json(const json& j, ResearchOutcome& o) {
  j.at("agent_index").get_to(o.agent_index);
  j.at("final_report").get_to(o.final_report);
  j.at("answer").get_to(o.answer);
  j.at("trajectory_id").get_to(o.trajectory_id);
  o.flagged = j.value("flagged", false);
}

void to_json(json& j, const SynthesisResult& r) {
  j = json{{"final_answer", r.final_answer},
           {"outcomes_used", r.outcomes_used},
           {"synthesis_prompt_chars", r.synthesis_prompt_chars},
           {"justification", r.justification},
           {"bypassed", r.bypassed}};
}

void from_json(const json& j, SynthesisResult& r) {
  j.at("final_answer").get_to(r.final_answer);
  j.at("outcomes_used").get_to(r.outcomes_used);
  j.at("synthesis_prompt_chars").get_to(r.synthesis_prompt_chars);
  r.justification = j.value("justification", std::string{});
  r.bypassed = j.value("bypassed", false);
}

ResearchOutcome outcome_from_trajectory(const Trajectory& t, int agent_index, bool count_forced_final) {
  ResearchOutcome o;
  o.agent_index = agent_index;
  o.trajectory_id = t.id;
  if (!t.rounds.empty()) o.final_report = t.rounds.back().response.report;
  const bool forced = !t.rounds.empty() && t.rounds.back().forced_final;
  if (t.final_answer && !trim(*t.final_answer).empty() && (count_forced_final || !forced)) {
    o.answer = *t.final_answer;
  } else {
    o.flagged = true;
  }
  return o;
}

ParallelResearch run_parallel_research(const Question& question, int n, const ResearchConfig& config,
                                       const BackendProvider& backends, const ToolRegistry& registry) {
  if (n < 1) throw Error(Errc::invalid_argument, "n must be >= 1");
  ParallelResearch out;
  out.trajectories.resize(static_cast<std::size_t>(n));

  std::atomic<int> next{0};
  const auto worker = [&] {
    for (int i = next++; i < n; i = next++) {
      const int agent = i + 1;
      SamplingParams sampling = config.sampling;
      sampling.seed = config.sampling.seed + agent;
      Trajectory t;
      try {
        auto backend = backends(agent);
        if (!backend) throw Error(Errc::invalid_argument, "no backend for agent " + std::to_string(agent));
        t = run_research(config.mode, question, config.budget, *backend, registry, sampling, {"", config.on_round});
      } catch (const std::exception& e) {
        t.id = default_trajectory_id(question, config.mode, sampling.seed);
        t.question = question;
        t.mode = config.mode;
        t.sampling = sampling;
        t.termination = Termination::backend_failure;
        t.failure_detail = e.what();
      }
      out.trajectories[static_cast<std::size_t>(i)] = std::move(t);
    }
  };
  const int threads = std::clamp(config.permits, 1, n);
  std::vector<std::jthread> pool;
  for (int i = 1; i < threads; ++i) pool.emplace_back(worker);
  worker();
  pool.clear();

  for (int i = 0; i < n; ++i) {
    out.outcomes.push_back(outcome_from_trajectory(out.trajectories[static_cast<std::size_t>(i)], i + 1,
                                                   config.count_forced_final));
  }
  return out;
}

PromptMessages render_synthesis_prompt(const Question& question, const std::vector<ResearchOutcome>& outcomes) {
  std::string user = "## Question\n" + question.text;
  for (const auto& o : outcomes) {
    user += "\n\n## Research agent " + std::to_string(o.agent_index) + "\n<report>\n" + o.final_report +
            "\n</report>\n<answer>" + o.answer + "</answer>";
  }
  return {{Role::system, std::string(prompts::synthesis)}, {Role::user, std::move(user)}};
}

namespace {

std::optional<std::string> tag_body(std::string_view text, std::string_view tag) {
  const std::string open = "<" + std::string(tag) + ">", close = "</" + std::string(tag) + ">";
  const auto b = text.find(open);
  if (b == std::string_view::npos) return std::nullopt;
  const auto e = text.find(close, b + open.size());
  if (e == std::string_view::npos) return std::nullopt;
  return std::string(text.substr(b + open.size(), e - b - open.size()));
}

}  // namespace

SynthesisResult synthesize(const Question& question, const std::vector<ResearchOutcome>& outcomes, ChatBackend& backend,
                           const SamplingParams& sampling) {
  if (outcomes.empty()) throw Error(Errc::invalid_argument, "synthesis needs at least one outcome");
  std::vector<ResearchOutcome> usable;
  std::copy_if(outcomes.begin(), outcomes.end(), std::back_inserter(usable),
               [](const ResearchOutcome& o) { return !o.flagged; });
  if (usable.empty()) throw Error(Errc::no_usable_outcomes, "all " + std::to_string(outcomes.size()) + " outcomes are flagged");

  SynthesisResult r;
  r.outcomes_used = static_cast<int>(usable.size());
  if (usable.size() == 1) {
    r.final_answer = usable.front().answer;
    r.bypassed = true;
    return r;
  }
  const auto prompt = render_synthesis_prompt(question, usable);
  r.synthesis_prompt_chars = prompt_chars(prompt);
  const auto reply = backend.complete(prompt, sampling);
  r.final_answer = trim(tag_body(reply, "answer").value_or(reply));
  r.justification = trim(tag_body(reply, "justification").value_or(""));
  spdlog::info("synthesis for {}: '{}' ({})", question.id, r.final_answer, r.justification);
  return r;
}

ResearchSynthesisRun run_research_synthesis(const Question& question, int n, const ResearchConfig& config,
                                            const BackendProvider& research_backends, ChatBackend& synthesis_backend,
                                            const ToolRegistry& registry) {
  ResearchSynthesisRun run;
  run.research = run_parallel_research(question, n, config, research_backends, registry);
  run.synthesis = synthesize(question, run.research.outcomes, synthesis_backend, config.sampling);
  if (!run.synthesis.bypassed) {
    std::vector<ResearchOutcome> usable;
    std::copy_if(run.research.outcomes.begin(), run.research.outcomes.end(), std::back_inserter(usable),
                 [](const ResearchOutcome& o) { return !o.flagged; });
    run.synthesis_prompt = render_synthesis_prompt(question, usable);
  }
  return run;
}

}  // namespace iterresearch
