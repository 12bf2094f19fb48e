#include <gtest/gtest.h>

#include <atomic>
#include <set>
#include <thread>

#include "test_support.hpp"

using namespace iterresearch;
using testsupport::answer_reply;
using testsupport::search_reply;

namespace {

const Question kQuestion{"q", "Who wrote Middlemarch?", std::string("George Eliot")};

testsupport::MockTools mock_tools() {
  testsupport::MockTools t;
  t.transport->add_search("m", testsupport::results_for("m", 2));
  return t;
}

// Agent u answers "answer-u" after one search; agents listed in `silent` never answer.
BackendProvider per_agent(std::set<int> silent = {}) {
  return [silent](int agent) -> std::shared_ptr<ChatBackend> {
    if (silent.count(agent)) return std::make_shared<ScriptedBackend>(std::vector<std::string>{"junk", "junk", "junk"});
    return std::make_shared<ScriptedBackend>(std::vector<std::string>{
        search_reply("report of agent " + std::to_string(agent), "m"),
        answer_reply("final report of agent " + std::to_string(agent), "answer-" + std::to_string(agent))});
  };
}

class CountingBackend final : public ChatBackend {
 public:
  explicit CountingBackend(std::string reply) : reply_(std::move(reply)) {}
  std::string complete(const PromptMessages& m, const SamplingParams&) override {
    ++calls;
    last = m;
    return reply_;
  }
  std::atomic<int> calls{0};
  PromptMessages last;

 private:
  std::string reply_;
};

}  // namespace

TEST(ParallelResearch, SingleAgentMatchesPlainRun) {
  const auto reg = mock_tools().registry();
  ResearchConfig config;
  const auto par = run_parallel_research(kQuestion, 1, config, per_agent(), reg);
  ASSERT_EQ(par.outcomes.size(), 1u);
  auto backend = per_agent()(1);
  SamplingParams s = config.sampling;
  s.seed += 1;
  const auto plain = run_iter_research(kQuestion, config.budget, *backend, reg, s);
  EXPECT_EQ(par.trajectories[0], plain);
  EXPECT_EQ(par.outcomes[0].answer, "answer-1");
  EXPECT_EQ(par.outcomes[0].final_report, "final report of agent 1");
}

TEST(ParallelResearch, EightAgentsOrderedAndSeeded) {
  const auto reg = mock_tools().registry();
  ResearchConfig config;
  config.permits = 3;
  config.sampling.seed = 100;
  const auto a = run_parallel_research(kQuestion, 8, config, per_agent(), reg);
  const auto b = run_parallel_research(kQuestion, 8, config, per_agent(), reg);
  ASSERT_EQ(a.outcomes.size(), 8u);
  for (int u = 1; u <= 8; ++u) {
    EXPECT_EQ(a.outcomes[u - 1].agent_index, u);
    EXPECT_EQ(a.outcomes[u - 1].answer, "answer-" + std::to_string(u));
    EXPECT_EQ(a.trajectories[u - 1].sampling.seed, 100 + u);
  }
  EXPECT_EQ(a.outcomes, b.outcomes);
  EXPECT_EQ(a.trajectories, b.trajectories);
}

TEST(ParallelResearch, FailedAgentsAreFlagged) {
  const auto reg = mock_tools().registry();
  const auto par = run_parallel_research(kQuestion, 3, ResearchConfig{}, per_agent({2}), reg);
  EXPECT_FALSE(par.outcomes[0].flagged);
  EXPECT_TRUE(par.outcomes[1].flagged);
  EXPECT_EQ(par.trajectories[1].termination, Termination::parse_failure);
  EXPECT_FALSE(par.outcomes[2].flagged);
}

TEST(ParallelResearch, ForcedFinalCanBeExcluded) {
  const auto reg = mock_tools().registry();
  ResearchConfig config;
  config.budget.max_rounds = 1;
  config.count_forced_final = false;
  const auto par = run_parallel_research(kQuestion, 2, config, per_agent(), reg);
  for (const auto& o : par.outcomes) EXPECT_TRUE(o.flagged);
  config.count_forced_final = true;
  const auto kept = run_parallel_research(kQuestion, 2, config, per_agent(), reg);
  for (const auto& o : kept.outcomes) EXPECT_FALSE(o.flagged);
}

TEST(Synthesize, SingleUsableOutcomeBypassesBackend) {
  CountingBackend backend("<answer>unused</answer>");
  const std::vector<ResearchOutcome> outcomes = {{1, "report", "Eliot", "t1", false}};
  const auto r = synthesize(kQuestion, outcomes, backend);
  EXPECT_EQ(r.final_answer, "Eliot");
  EXPECT_TRUE(r.bypassed);
  EXPECT_EQ(backend.calls.load(), 0);
}

TEST(Synthesize, ConsensusThroughBackend) {
  CountingBackend backend("<answer>George Eliot</answer>\n<justification>All three agree.</justification>");
  std::vector<ResearchOutcome> outcomes;
  for (int u = 1; u <= 3; ++u) outcomes.push_back({u, "report " + std::to_string(u), "George Eliot", "t", false});
  const auto r = synthesize(kQuestion, outcomes, backend);
  EXPECT_EQ(r.final_answer, "George Eliot");
  EXPECT_EQ(r.justification, "All three agree.");
  EXPECT_EQ(r.outcomes_used, 3);
  EXPECT_EQ(backend.calls.load(), 1);
  EXPECT_EQ(r.synthesis_prompt_chars, prompt_chars(backend.last));
}

TEST(Synthesize, FlaggedOutcomesAreLeftOut) {
  CountingBackend backend("plain answer without tags");
  const std::vector<ResearchOutcome> outcomes = {
      {1, "r1", "A", "t1", false}, {2, "secret r2", "", "t2", true}, {3, "r3", "B", "t3", false}};
  const auto r = synthesize(kQuestion, outcomes, backend);
  EXPECT_EQ(r.final_answer, "plain answer without tags");
  EXPECT_EQ(r.outcomes_used, 2);
  EXPECT_EQ(backend.last[1].content.find("secret r2"), std::string::npos);
}

TEST(Synthesize, AllFlaggedIsAnError) {
  CountingBackend backend("x");
  const std::vector<ResearchOutcome> outcomes = {{1, "r", "", "t", true}, {2, "r", "", "t", true}};
  try {
    synthesize(kQuestion, outcomes, backend);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::no_usable_outcomes);
  }
}

TEST(Synthesize, PromptSizeIndependentOfTrajectoryLength) {
  // Agents with 2 and 12 rounds but identical final reports give identical synthesis prompts.
  const auto reg = mock_tools().registry();
  const auto make = [&](int rounds) {
    return [rounds](int agent) -> std::shared_ptr<ChatBackend> {
      std::vector<std::string> script;
      for (int i = 1; i < rounds; ++i) script.push_back(search_reply("interim " + std::to_string(i), "m"));
      script.push_back(answer_reply("final report of agent " + std::to_string(agent), "A"));
      return std::make_shared<ScriptedBackend>(script);
    };
  };
  const auto shortp = run_parallel_research(kQuestion, 3, ResearchConfig{}, make(2), reg);
  const auto longp = run_parallel_research(kQuestion, 3, ResearchConfig{}, make(12), reg);
  EXPECT_EQ(longp.trajectories[0].rounds.size(), 12u);
  EXPECT_EQ(render_synthesis_prompt(kQuestion, shortp.outcomes), render_synthesis_prompt(kQuestion, longp.outcomes));

  // And linear in the total report size.
  std::vector<ResearchOutcome> outs = {{1, std::string(100, 'a'), "A", "t", false}};
  const auto base = prompt_chars(render_synthesis_prompt(kQuestion, outs));
  outs[0].final_report = std::string(1100, 'a');
  EXPECT_EQ(prompt_chars(render_synthesis_prompt(kQuestion, outs)) - base, 1000);
}

TEST(ResearchSynthesis, EndToEnd) {
  const auto reg = mock_tools().registry();
  CountingBackend synth("<answer>answer-2</answer><justification>best</justification>");
  const auto run = run_research_synthesis(kQuestion, 4, ResearchConfig{}, per_agent(), synth, reg);
  EXPECT_EQ(run.research.outcomes.size(), 4u);
  EXPECT_EQ(run.synthesis.final_answer, "answer-2");
  EXPECT_EQ(run.synthesis_prompt, synth.last);
}

TEST(Json, OutcomeAndResultRoundTrip) {
  const ResearchOutcome o{3, "rep", "ans", "q:iter:3", true};
  EXPECT_EQ(json(o).get<ResearchOutcome>(), o);
  const SynthesisResult r{"a", 2, 1234, "why", false};
  EXPECT_EQ(json(r).get<SynthesisResult>(), r);
}
