#include <gtest/gtest.h>

#include "test_support.hpp"

using namespace iterresearch;
using testsupport::make_trajectory;

namespace {

RoundRecord record_at(int index) {
  RoundRecord r;
  r.workspace.question = {"q", "text", std::nullopt};
  r.workspace.round_index = index;
  if (index > 1) {
    r.workspace.prev_report = "prev";
    r.workspace.prev_action = ToolCall{"search", json::object()};
    r.workspace.prev_tool_response = ToolResponse{"search", ToolStatus::ok, "o", 0};
  }
  r.response.report = "rep";
  r.response.action = ToolCall{"search", json::object()};
  r.tool_response = ToolResponse{"search", ToolStatus::ok, "o", 0};
  return r;
}

bool has_field(const std::vector<Violation>& vs, const std::string& needle) {
  for (const auto& v : vs) {
    if (v.field.find(needle) != std::string::npos) return true;
  }
  return false;
}

}  // namespace

TEST(AppendRound, EmptyTrajectoryTakesRoundOne) {
  Trajectory t;
  t = append_round(t, record_at(1));
  EXPECT_EQ(t.rounds.size(), 1u);
}

TEST(AppendRound, SkippedIndexIsAGap) {
  Trajectory t;
  t = append_round(t, record_at(1));
  t = append_round(t, record_at(2));
  try {
    append_round(t, record_at(4));
    FAIL() << "expected IndexGap";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::index_gap);
  }
}

TEST(AppendRound, TerminatedTrajectoryRejectsRounds) {
  Trajectory t;
  t.termination = Termination::final_answer;
  try {
    append_round(t, record_at(1));
    FAIL() << "expected AlreadyTerminated";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::already_terminated);
  }
}

TEST(ValidateTrajectory, WellFormedThreeRoundsIsClean) {
  const auto t = make_trajectory("q1", 3, "A");
  EXPECT_TRUE(validate_trajectory(t).empty());
}

TEST(ValidateTrajectory, RoundOneWithReportIsFlagged) {
  auto t = make_trajectory("q1", 3, "A");
  t.rounds[0].workspace.prev_report = "leaked";
  const auto vs = validate_trajectory(t);
  ASSERT_FALSE(vs.empty());
  EXPECT_TRUE(has_field(vs, "prev_report"));
}

TEST(ValidateTrajectory, FinalAnswerTerminationNeedsAnAnswer) {
  auto t = make_trajectory("q1", 2, "A");
  t.final_answer.reset();
  const auto vs = validate_trajectory(t);
  ASSERT_FALSE(vs.empty());
  EXPECT_TRUE(has_field(vs, "final_answer"));
}

TEST(ValidateTrajectory, FailureTerminationsMayHaveNoRounds) {
  Trajectory t;
  t.question = {"q", "text", std::nullopt};
  t.termination = Termination::parse_failure;
  EXPECT_TRUE(validate_trajectory(t).empty());
  t.termination = Termination::final_answer;
  EXPECT_FALSE(validate_trajectory(t).empty());
}

TEST(ValidateWorkspace, LaterRoundsNeedTheirFields) {
  Workspace ws = initial_workspace({"q", "text", std::nullopt});
  EXPECT_TRUE(validate_workspace(ws).empty());
  ws.round_index = 2;
  EXPECT_FALSE(validate_workspace(ws).empty());
  ws.question.text = "   ";
  ws.round_index = 1;
  EXPECT_TRUE(has_field(validate_workspace(ws), "question.text"));
}

TEST(Sampling, DefaultsAndValidation) {
  SamplingParams s;
  EXPECT_DOUBLE_EQ(s.temperature, 0.6);
  EXPECT_DOUBLE_EQ(s.top_p, 0.95);
  EXPECT_NO_THROW(validate_sampling(s));
  s.top_p = 0.0;
  EXPECT_THROW(validate_sampling(s), Error);
  s = {};
  s.max_rounds = 0;
  EXPECT_THROW(validate_sampling(s), Error);
}

TEST(Text, NormalizeAnswer) {
  EXPECT_EQ(normalize_answer("  George   ELIOT \n"), "george eliot");
  EXPECT_EQ(normalize_answer(""), "");
}

TEST(Text, TruncateRespectsUtf8Boundaries) {
  const std::string s = "ab\xC3\xA9" "cd";  // a b é c d
  const auto t = truncate_utf8(s, 3, "~");
  EXPECT_EQ(t, "ab~");
  EXPECT_EQ(truncate_utf8("short", 10, "~"), "short");
}

TEST(Json, TrajectoryRoundTripsAndDumpsAreStable) {
  testsupport::Gen gen(11);
  for (int i = 0; i < 50; ++i) {
    auto t = make_trajectory("q" + std::to_string(i), gen.uniform(1, 6), "ans " + std::to_string(i));
    t.rounds.back().forced_final = gen.coin();
    t.failure_detail = gen.coin() ? std::optional<std::string>("x") : std::nullopt;
    const json j = t;
    const auto back = j.get<Trajectory>();
    EXPECT_EQ(back, t);
    EXPECT_EQ(dump_json(json(back)), dump_json(j));
  }
}

TEST(Json, ActionEncoding) {
  const json call = Action{ToolCall{"search", json{{"queries", {"x"}}}}};
  EXPECT_TRUE(call.contains("tool_call"));
  const json ans = Action{FinalAnswer{"42"}};
  EXPECT_EQ(ans.at("final_answer").at("text"), "42");
  EXPECT_EQ(ans.get<Action>(), Action{FinalAnswer{"42"}});
}
