#include <gtest/gtest.h>

#include <atomic>
#include <filesystem>
#include <fstream>

#include "test_support.hpp"

using namespace iterresearch;
namespace fs = std::filesystem;

#ifndef ITERRESEARCH_FIXTURE_DIR
#define ITERRESEARCH_FIXTURE_DIR "tests/fixtures"
#endif

namespace {

class CountingBackend final : public ChatBackend {
 public:
  explicit CountingBackend(std::vector<std::string> replies) : replies_(std::move(replies)) {}
  std::string complete(const PromptMessages&, const SamplingParams&) override {
    const auto i = static_cast<std::size_t>(calls++);
    return replies_.at(std::min(i, replies_.size() - 1));
  }
  std::atomic<int> calls{0};

 private:
  std::vector<std::string> replies_;
};

const std::string kFixtures = std::string(ITERRESEARCH_FIXTURE_DIR) + "/sweep";

json load_script() {
  std::ifstream in(kFixtures + "/script.json");
  return json::parse(in);
}

std::shared_ptr<ChatBackend> scripted(const json& script, const std::string& role,
                                      const std::vector<std::string>& keys) {
  const auto& section = script.at(role);
  for (const auto& k : keys) {
    if (section.contains(k)) return std::make_shared<ScriptedBackend>(section.at(k).get<std::vector<std::string>>());
  }
  return std::make_shared<ScriptedBackend>(std::vector<std::string>{});
}

struct FixtureBench {
  json script = load_script();
  std::shared_ptr<MockTransport> transport = std::make_shared<MockTransport>(kFixtures + "/tools");
  ToolRegistry registry = make_default_registry(
      transport, std::make_shared<FunctionBackend>([](auto&, auto&) { return std::string("s"); }), ToolsConfig{},
      [] { return std::int64_t{0}; });
  std::atomic<int> research_calls{0}, synthesis_calls{0};

  BenchBackends backends() {
    BenchBackends b;
    b.research = [this](const BenchmarkItem& item, int agent) {
      ++research_calls;
      return scripted(script, "research", {item.id + "/" + std::to_string(agent), item.id, "default"});
    };
    b.synthesis = [this](const BenchmarkItem& item) {
      ++synthesis_calls;
      return scripted(script, "synthesis", {item.id, "default"});
    };
    b.judge = [this](const BenchmarkItem& item) { return scripted(script, "judge", {item.id, "default"}); };
    return b;
  }
};

fs::path fresh_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("iterresearch_harness_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  return p;
}

std::vector<std::string> read_lines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

}  // namespace

TEST(Dataset, ParsesAndRejectsBadInput) {
  const auto items = parse_dataset(
      "{\"id\":\"a\",\"question\":\"Q1\",\"answer\":\"A1\",\"tags\":[\"x\"]}\n\n{\"id\":2,\"question\":\"Q2\",\"answer\":\"A2\"}\n");
  ASSERT_EQ(items.size(), 2u);
  EXPECT_EQ(items[0].tags, std::vector<std::string>{"x"});
  EXPECT_EQ(items[1].id, "2");
  for (const std::string bad : {"not json", "{\"id\":\"a\",\"question\":\"Q\"}",
                                "{\"id\":\"a\",\"question\":\"Q\",\"answer\":\"A\"}\n{\"id\":\"a\",\"question\":\"Q\",\"answer\":\"A\"}"}) {
    try {
      parse_dataset(bad);
      FAIL() << bad;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), Errc::dataset_parse);
    }
  }
  EXPECT_EQ(load_dataset(kFixtures + "/dataset.jsonl").size(), 3u);
}

TEST(PassAtK, Examples) {
  EXPECT_DOUBLE_EQ(pass_at_k({{true}, {true}, {true}, {false}}, 1), 0.75);
  EXPECT_DOUBLE_EQ(pass_at_k({{false, false}, {false, false}}, 2), 0.0);
  const AttemptMatrix late = {{false, true, false}};
  EXPECT_DOUBLE_EQ(pass_at_k(late, 1), 0.0);
  EXPECT_DOUBLE_EQ(pass_at_k(late, 2), 1.0);
  EXPECT_DOUBLE_EQ(pass_at_k(late, 3), 1.0);
  try {
    pass_at_k({{true}, {true, false}}, 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::insufficient_attempts);
  }
}

TEST(Judge, FastPathsNeverCallTheBackend) {
  CountingBackend b({"CORRECT"});
  EXPECT_TRUE(judge_answer("q", "  george ELIOT", "George Eliot", b));
  EXPECT_FALSE(judge_answer("q", "", "George Eliot", b));
  EXPECT_FALSE(judge_answer("q", "   ", "George Eliot", b));
  EXPECT_EQ(b.calls.load(), 0);
}

TEST(Judge, VerdictsAndRetry) {
  CountingBackend yes({"CORRECT"});
  EXPECT_TRUE(judge_answer("q", "Mary Ann Evans", "George Eliot", yes));
  EXPECT_EQ(yes.calls.load(), 1);
  CountingBackend no({"INCORRECT\nbecause"});
  EXPECT_FALSE(judge_answer("q", "Sydney", "Canberra", no));
  CountingBackend garbled({"maybe?", "garbled"});
  EXPECT_FALSE(judge_answer("q", "x", "y", garbled));
  EXPECT_EQ(garbled.calls.load(), 2);
  CountingBackend second({"hmm", "**Correct**"});
  EXPECT_TRUE(judge_answer("q", "x", "y", second));
  EXPECT_EQ(second.calls.load(), 2);
}

TEST(Judge, VerdictGrammar) {
  EXPECT_EQ(parse_verdict("CORRECT"), Verdict::correct);
  EXPECT_EQ(parse_verdict("\n  correct.\nINCORRECT"), Verdict::correct);
  EXPECT_EQ(parse_verdict("Incorrect"), Verdict::incorrect);
  EXPECT_EQ(parse_verdict("The answer is CORRECT"), Verdict::unparseable);
  EXPECT_EQ(parse_verdict(""), Verdict::unparseable);
  const auto prompt = render_judge_prompt("QQ", "PP", "RR");
  EXPECT_NE(prompt[0].content.find("QQ"), std::string::npos);
  EXPECT_NE(prompt[0].content.find("PP"), std::string::npos);
  EXPECT_EQ(prompt[0].content.find("{{"), std::string::npos);
}

TEST(TrajectoryStats, Examples) {
  using testsupport::make_trajectory;
  const auto s = trajectory_stats({make_trajectory("a", 3, "x"), make_trajectory("b", 5, "x")});
  EXPECT_DOUBLE_EQ(s.avg_turns, 4.0);
  EXPECT_EQ(s.max_turns, 5);

  auto t = make_trajectory("c", 4, "x");  // three search calls
  auto v = make_trajectory("d", 2, "x", "ref", "visit");  // one visit call
  const auto f = trajectory_stats({t, v});
  EXPECT_DOUBLE_EQ(f.tool_frequency.at("search"), 75.0);
  EXPECT_DOUBLE_EQ(f.tool_frequency.at("visit"), 25.0);
  try {
    trajectory_stats({});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::empty_input);
  }
}

TEST(BenchMode, Parsing) {
  EXPECT_EQ(parse_bench_mode("iter").kind, BenchMode::Kind::iter);
  EXPECT_EQ(parse_bench_mode("mono").kind, BenchMode::Kind::mono);
  EXPECT_EQ(parse_bench_mode("synthesis-8"), (BenchMode{BenchMode::Kind::synthesis, 8}));
  EXPECT_EQ(to_string(parse_bench_mode("synthesis-16")), "synthesis-16");
  for (const auto* bad : {"synthesis-0", "synthesis-", "synthesis-x", "other"}) {
    EXPECT_THROW(parse_bench_mode(bad), Error) << bad;
  }
}

TEST(RunBenchmark, IterFixtureVerdicts) {
  // Hand-derived from script.json: a1 answers Canberra (exact), a2's first agent answers 1968 and the
  // judge script says INCORRECT, a3 answers Mary Ann Evans and the judge script says CORRECT.
  FixtureBench fx;
  const auto dir = fresh_dir("iter");
  BenchConfig config;
  config.mode = parse_bench_mode("iter");
  const auto dataset = load_dataset(kFixtures + "/dataset.jsonl");
  const auto report = run_benchmark(dataset, config, fx.backends(), fx.registry, dir.string());
  ASSERT_EQ(report.verdicts.size(), 3u);
  EXPECT_TRUE(report.verdicts[0].correct);
  EXPECT_FALSE(report.verdicts[1].correct);
  EXPECT_EQ(report.verdicts[1].predicted, "1968");
  EXPECT_TRUE(report.verdicts[2].correct);
  EXPECT_DOUBLE_EQ(report.pass_at_1, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(report.analytics.avg_turns, 2.0);
  EXPECT_DOUBLE_EQ(report.analytics.tool_frequency.at("search"), 100.0);
  EXPECT_TRUE(fs::exists(dir / "report.json"));

  const auto again = report_from_store(dataset, config, dir.string());
  EXPECT_EQ(json(again).dump(), json(report).dump());
  fs::remove_all(dir);
}

TEST(RunBenchmark, SynthesisEightConsumption) {
  FixtureBench fx;
  const auto dir = fresh_dir("syn8");
  BenchConfig config;
  config.mode = parse_bench_mode("synthesis-8");
  const auto report =
      run_benchmark(load_dataset(kFixtures + "/dataset.jsonl"), config, fx.backends(), fx.registry, dir.string());
  EXPECT_EQ(fx.research_calls.load(), 3 * 8);
  EXPECT_EQ(fx.synthesis_calls.load(), 3);
  for (const auto& v : report.verdicts) {
    EXPECT_EQ(v.research_runs, 8);
    EXPECT_EQ(v.synthesis_calls, 1);
  }
  EXPECT_DOUBLE_EQ(report.pass_at_1, 1.0);
  EXPECT_EQ(read_lines(dir / "trajectories.jsonl").size(), 24u);
  EXPECT_EQ(read_lines(dir / "synthesis.jsonl").size(), 3u);
  fs::remove_all(dir);
}

TEST(RunBenchmark, ResumeGivesIdenticalReport) {
  const auto dataset = load_dataset(kFixtures + "/dataset.jsonl");
  BenchConfig config;
  config.mode = parse_bench_mode("synthesis-2");
  FixtureBench fx1;
  const auto dir = fresh_dir("resume");
  const auto full = run_benchmark(dataset, config, fx1.backends(), fx1.registry, dir.string());

  // Simulate an interruption during the last item: its verdict never landed and a line was half written.
  auto verdicts = read_lines(dir / "verdicts.jsonl");
  verdicts.pop_back();
  {
    std::ofstream out(dir / "verdicts.jsonl", std::ios::trunc);
    for (const auto& l : verdicts) out << l << '\n';
    std::ofstream(dir / "trajectories.jsonl", std::ios::app) << "{\"item_id\":\"a3\",\"traj";
  }
  FixtureBench fx2;
  const auto resumed = run_benchmark(dataset, config, fx2.backends(), fx2.registry, dir.string());
  EXPECT_EQ(resumed.skipped_items, (std::vector<std::string>{"a1", "a2"}));
  EXPECT_EQ(fx2.research_calls.load(), 2);
  EXPECT_EQ(json(resumed).dump(), json(full).dump());
  EXPECT_EQ(read_lines(dir / "trajectories.jsonl").size(), 6u);

  FixtureBench fx3;
  const auto noop = run_benchmark(dataset, config, fx3.backends(), fx3.registry, dir.string());
  EXPECT_EQ(noop.skipped_items.size(), 3u);
  EXPECT_EQ(fx3.research_calls.load(), 0);
  EXPECT_EQ(json(noop).dump(), json(full).dump());
  fs::remove_all(dir);
}

TEST(RunBenchmark, ItemFailuresScoreIncorrect) {
  FixtureBench fx;
  auto backends = fx.backends();
  backends.research = [](const BenchmarkItem&, int) {
    return std::make_shared<ScriptedBackend>(std::vector<std::string>{});
  };
  const auto dir = fresh_dir("fail");
  BenchConfig config;
  const auto report =
      run_benchmark(load_dataset(kFixtures + "/dataset.jsonl"), config, backends, fx.registry, dir.string());
  EXPECT_EQ(report.num_items, 3);
  EXPECT_DOUBLE_EQ(report.pass_at_1, 0.0);
  for (const auto& v : report.verdicts) EXPECT_FALSE(v.failure.empty());
  fs::remove_all(dir);
}

TEST(RunBenchmark, ConcurrentItemsMatchSequential) {
  const auto dataset = load_dataset(kFixtures + "/dataset.jsonl");
  BenchConfig config;
  config.mode = parse_bench_mode("synthesis-4");
  FixtureBench fx1, fx2;
  const auto d1 = fresh_dir("seq"), d2 = fresh_dir("par");
  const auto seq = run_benchmark(dataset, config, fx1.backends(), fx1.registry, d1.string());
  config.item_permits = 3;
  const auto par = run_benchmark(dataset, config, fx2.backends(), fx2.registry, d2.string());
  EXPECT_EQ(seq.verdicts, par.verdicts);
  EXPECT_DOUBLE_EQ(seq.pass_at_1, par.pass_at_1);
  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST(RunSweep, PerNReports) {
  FixtureBench fx;
  const auto dir = fresh_dir("sweep");
  const auto reports = run_sweep(load_dataset(kFixtures + "/dataset.jsonl"), {1, 2, 4, 8}, BenchConfig{},
                                 fx.backends(), fx.registry, dir.string());
  ASSERT_EQ(reports.size(), 4u);
  EXPECT_DOUBLE_EQ(reports[0].pass_at_1, 2.0 / 3.0);
  for (std::size_t i = 1; i < 4; ++i) EXPECT_DOUBLE_EQ(reports[i].pass_at_1, 1.0);
  EXPECT_TRUE(fs::exists(dir / "n8" / "report.json"));
  fs::remove_all(dir);
}
