#include <gtest/gtest.h>

#include <chrono>
#include <filesystem>
#include <thread>

#include "test_support.hpp"

using namespace iterresearch;
using namespace std::chrono_literals;
using testsupport::results_for;

namespace {

class SleepTool final : public Tool {
 public:
  SleepTool(std::string name, std::chrono::milliseconds sleep, std::string output = "done")
      : spec_{std::move(name), "sleeps", json{{"type", "object"}}}, sleep_(sleep), output_(std::move(output)) {}
  const ToolSpec& spec() const override { return spec_; }
  std::chrono::milliseconds default_timeout() const override { return 100ms; }
  std::string invoke(const json&, std::chrono::milliseconds) override {
    std::this_thread::sleep_for(sleep_);
    return output_;
  }

 private:
  ToolSpec spec_;
  std::chrono::milliseconds sleep_;
  std::string output_;
};

class ThrowTool final : public Tool {
 public:
  const ToolSpec& spec() const override { return spec_; }
  std::chrono::milliseconds default_timeout() const override { return 1000ms; }
  std::string invoke(const json&, std::chrono::milliseconds) override { throw std::runtime_error("boom"); }

 private:
  ToolSpec spec_{"throws", "always fails", json{{"type", "object"}}};
};

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("iterresearch_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace

TEST(Search, TwoQueriesAtMostTenEach) {
  MockTransport t;
  t.add_search("q1", results_for("q1", 14));
  t.add_search("q2", results_for("q2", 3));
  const auto r = search(t, {"q1", "q2"}, 8);
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(r[0].second.size(), 10u);
  EXPECT_EQ(r[1].second.size(), 3u);
}

TEST(Search, EmptyBatchAndCap) {
  MockTransport t;
  try {
    search(t, {}, 8);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::empty_batch);
  }
  EXPECT_THROW(search(t, std::vector<std::string>(9, "q"), 8), Error);
  try {
    scholar(t, {}, 8);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::empty_batch);
  }
}

TEST(Search, FixtureFilesAreEchoedByteStable) {
  const auto dir = temp_dir("fixtures");
  MockTransport::write_fixture(dir.string(), "search", "fixture query",
                               json{{"query", "fixture query"}, {"results", results_for("fixture query", 2)}});
  MockTransport t(dir.string());
  const auto a = search(t, {"fixture query"}, 8);
  const auto b = search(t, {"fixture query"}, 8);
  ASSERT_EQ(a[0].second.size(), 2u);
  EXPECT_EQ(a[0].second[1].url, "https://example.org/2");
  EXPECT_EQ(render_search_results(a), render_search_results(b));
  EXPECT_THROW(t.web_search("missing"), Error);
  std::filesystem::remove_all(dir);
}

TEST(Scholar, MetadataFieldsPopulated) {
  MockTransport t;
  t.add_scholar("x", {{"Paper", {"A. Author", "B. Author"}, "NeurIPS", 42, "https://example.org/p"}});
  const auto r = scholar(t, {"x"}, 8);
  ASSERT_EQ(r[0].second.size(), 1u);
  const auto& p = r[0].second[0];
  EXPECT_EQ(p.authors.size(), 2u);
  EXPECT_EQ(p.venue, "NeurIPS");
  EXPECT_EQ(p.citation_count, 42);
  EXPECT_NE(render_scholar_results(r).find("NeurIPS"), std::string::npos);
}

TEST(Visit, SummariesFollowGoalAndFailuresArePerUrl) {
  MockTransport t;
  t.add_page("https://a.org/1", "Table 3 reports 91% accuracy.");
  t.add_page("https://a.org/2", "Ablation results.");
  t.add_page_error("https://down.org/", "connection refused");
  FunctionBackend summarizer([](const PromptMessages& m, const SamplingParams&) {
    const auto& p = m.back().content;
    const auto g = p.find("Goal:\n") + 6;
    return "About [" + p.substr(g, p.find('\n', g) - g) + "]";
  });
  const auto ok = visit(t, {"https://a.org/1", "https://a.org/2"}, "find experimental results", summarizer);
  ASSERT_EQ(ok.size(), 2u);
  for (const auto& e : ok) {
    EXPECT_EQ(e.status, ToolStatus::ok);
    EXPECT_NE(e.summary.find("find experimental results"), std::string::npos);
  }
  const auto mixed = visit(t, {"https://a.org/1", "https://down.org/"}, "goal", summarizer);
  EXPECT_EQ(mixed[0].status, ToolStatus::ok);
  EXPECT_EQ(mixed[1].status, ToolStatus::error);
  EXPECT_EQ(render_visit_entries(mixed), render_visit_entries(visit(t, {"https://a.org/1", "https://down.org/"}, "goal", summarizer)));
  EXPECT_THROW(visit(t, {}, "goal", summarizer), Error);
  try {
    visit(t, {"https://a.org/1"}, "  ", summarizer);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::empty_goal);
  }
}

TEST(Execute, DispatchesSearch) {
  testsupport::MockTools tools;
  tools.transport->add_search("a", results_for("a", 2));
  const auto reg = tools.registry();
  const auto r = execute({"search", json{{"queries", {"a"}}}}, reg);
  EXPECT_EQ(r.status, ToolStatus::ok);
  EXPECT_EQ(r.content, render_search_results(search(*tools.transport, {"a"}, 8)));
  EXPECT_EQ(r.latency_ms, 0);
}

TEST(Execute, UnknownToolIsAnObservation) {
  const auto reg = testsupport::MockTools{}.registry();
  const auto r = execute({"nosuch", json::object()}, reg);
  EXPECT_EQ(r.status, ToolStatus::error);
  EXPECT_NE(r.content.find("nosuch"), std::string::npos);
}

TEST(Execute, SchemaViolationIsAnObservation) {
  const auto reg = testsupport::MockTools{}.registry();
  for (const auto& args : {json::object(), json{{"queries", "not a list"}}, json{{"queries", json::array()}},
                           json{{"queries", {"a"}}, {"extra", 1}}}) {
    const auto r = execute({"search", args}, reg);
    EXPECT_EQ(r.status, ToolStatus::error) << args.dump();
    EXPECT_NE(r.content.find("invalid arguments"), std::string::npos);
  }
}

TEST(Execute, DeadlineBecomesTimeout) {
  ToolRegistry reg({std::make_shared<SleepTool>("slow", 600ms)});
  const auto started = std::chrono::steady_clock::now();
  const auto r = execute({"slow", json::object()}, reg, 50ms);
  EXPECT_EQ(r.status, ToolStatus::timeout);
  EXPECT_LT(std::chrono::steady_clock::now() - started, 500ms);
}

TEST(Execute, ToolExceptionsAndTruncation) {
  ToolRegistry reg({std::make_shared<ThrowTool>(), std::make_shared<SleepTool>("big", 0ms, std::string(100, 'x'))}, 40);
  const auto thrown = execute({"throws", json::object()}, reg);
  EXPECT_EQ(thrown.status, ToolStatus::error);
  EXPECT_NE(thrown.content.find("boom"), std::string::npos);
  const auto big = execute({"big", json::object()}, reg);
  EXPECT_EQ(big.content, std::string(40, 'x') + "\n[truncated to 40 characters]");
}

TEST(Registry, DuplicateNamesRejectedAndSpecsSorted) {
  EXPECT_THROW(ToolRegistry({std::make_shared<SleepTool>("a", 0ms), std::make_shared<SleepTool>("a", 0ms)}), Error);
  const auto reg = testsupport::MockTools{}.registry();
  std::vector<std::string> names;
  for (const auto& s : reg.specs()) names.push_back(s.name);
  EXPECT_EQ(names, (std::vector<std::string>{"code", "scholar", "search", "visit"}));
}

TEST(Schema, Subset) {
  const json schema = search_spec(2).argument_schema;
  EXPECT_TRUE(check_schema(schema, json{{"queries", {"a", "b"}}}).empty());
  EXPECT_FALSE(check_schema(schema, json{{"queries", {"a", "b", "c"}}}).empty());
  EXPECT_FALSE(check_schema(schema, json{{"queries", {""}}}).empty());
  EXPECT_FALSE(check_schema(schema, json::array()).empty());
}

TEST(Url, Validation) {
  EXPECT_TRUE(is_valid_url("https://example.org/a?b=c"));
  EXPECT_TRUE(is_valid_url("http://localhost:8080/"));
  EXPECT_FALSE(is_valid_url("ftp://example.org"));
  EXPECT_FALSE(is_valid_url("https://"));
  EXPECT_FALSE(is_valid_url("https://exa mple.org"));
}

// ---------------------------------------------------------------------------
// Sandbox

TEST(RunCode, PrintsArithmetic) {
  const auto r = run_code("print(6*7)", SandboxLimits{});
  EXPECT_EQ(r.stdout_text, "42\n");
  EXPECT_EQ(r.exit_status, 0);
  EXPECT_FALSE(r.timed_out);
}

TEST(RunCode, InfiniteLoopTimesOut) {
  SandboxLimits limits;
  limits.wall_time = 2s;
  const auto started = std::chrono::steady_clock::now();
  const auto r = run_code("while True:\n    pass\n", limits);
  const auto took = std::chrono::steady_clock::now() - started;
  EXPECT_TRUE(r.timed_out);
  EXPECT_LT(took, 4s);
  EXPECT_NE(render_code_result(r).find("timed out"), std::string::npos);
}

TEST(RunCode, SilentProgramGetsNotice) {
  const auto r = run_code("x = sum(range(10))", SandboxLimits{});
  EXPECT_TRUE(r.stdout_text.empty());
  EXPECT_NE(render_code_result(r).find("no output printed"), std::string::npos);
}

TEST(RunCode, NetworkIsBlocked) {
  const auto r = run_code(
      "import socket\n"
      "try:\n"
      "    s = socket.socket(socket.AF_INET, socket.SOCK_STREAM)\n"
      "    s.settimeout(2)\n"
      "    s.connect(('1.1.1.1', 80))\n"
      "    print('connected')\n"
      "except OSError as e:\n"
      "    print('blocked')\n",
      SandboxLimits{});
  EXPECT_EQ(r.stdout_text, "blocked\n");
}

TEST(RunCode, MissingInterpreterIsSandboxUnavailable) {
  try {
    run_code("print(1)", SandboxLimits{}, {"/nonexistent/interpreter"});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::sandbox_unavailable);
  }
}

TEST(RunCode, ThroughExecuteUsesCodeArgument) {
  testsupport::MockTools tools;
  const auto reg = tools.registry();
  const auto r = execute({"code", json{{"code", "print('hi')"}}}, reg);
  EXPECT_EQ(r.status, ToolStatus::ok);
  EXPECT_NE(r.content.find("hi"), std::string::npos);
}
