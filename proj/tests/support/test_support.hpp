#pragma once

// Hand-rolled generators and fixtures shared by the unit and acceptance suites.

#include <memory>
#include <random>
#include <string>
#include <vector>

#include "iterresearch/corpus.hpp"
#include "iterresearch/engine.hpp"
#include "iterresearch/harness.hpp"

namespace testsupport {

using namespace iterresearch;

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  std::uint64_t next() { return rng_(); }
  int uniform(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  double real(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  bool coin(double p = 0.5) { return std::bernoulli_distribution(p)(rng_); }

  // Printable text drawn from a small alphabet that includes markup-ish characters.
  std::string text(int min_len, int max_len) {
    static const std::string alphabet =
        "abcdefghijklmnopqrstuvwxyz ABCDEFGHIJ0123456789.,;:!?-_()[]{}'\"/\\\n\t<>=+*&%$#@";
    const int n = uniform(min_len, max_len);
    std::string s;
    for (int i = 0; i < n; ++i) s += alphabet[static_cast<std::size_t>(uniform(0, static_cast<int>(alphabet.size()) - 1))];
    return s;
  }

  // Text that cannot contain any closing tag.
  std::string safe_text(int min_len, int max_len) {
    auto s = text(min_len, max_len);
    for (auto& c : s) {
      if (c == '<') c = '(';
    }
    return s;
  }

  std::string bytes(int min_len, int max_len) {
    const int n = uniform(min_len, max_len);
    std::string s;
    for (int i = 0; i < n; ++i) s += static_cast<char>(uniform(0, 255));
    return s;
  }

  json json_value(int depth) {
    switch (uniform(0, depth > 2 ? 4 : 6)) {
      case 0:
        return uniform(-1000, 1000);
      case 1:
        return safe_text(0, 12);
      case 2:
        return coin();
      case 3:
        return nullptr;
      case 4:
        return real(-10, 10);
      case 5: {
        json a = json::array();
        for (int i = uniform(0, 3); i > 0; --i) a.push_back(json_value(depth + 1));
        return a;
      }
      default: {
        json o = json::object();
        for (int i = uniform(0, 3); i > 0; --i) o["k" + std::to_string(uniform(0, 99))] = json_value(depth + 1);
        return o;
      }
    }
  }

  RoundResponse round_response() {
    RoundResponse r;
    r.think = safe_text(0, 80);
    r.report = safe_text(1, 120);
    if (trim(r.report).empty()) r.report = "r" + r.report;
    if (coin()) {
      json args = json::object();
      for (int i = uniform(0, 3); i > 0; --i) args["a" + std::to_string(i)] = json_value(0);
      r.action = ToolCall{"tool_" + std::to_string(uniform(0, 9)), args};
    } else {
      auto a = safe_text(1, 40);
      if (trim(a).empty()) a = "x" + a;
      r.action = FinalAnswer{trim(a)};
    }
    return r;
  }

 private:
  std::mt19937_64 rng_;
};

inline std::string tool_call_reply(const std::string& report, const std::string& tool, const json& args,
                                   const std::string& think = "thinking") {
  return "<think>" + think + "</think>\n<report>" + report + "</report>\n<tool_call>" +
         json{{"name", tool}, {"arguments", args}}.dump() + "</tool_call>";
}

inline std::string answer_reply(const std::string& report, const std::string& answer,
                                const std::string& think = "done") {
  return "<think>" + think + "</think>\n<report>" + report + "</report>\n<answer>" + answer + "</answer>";
}

inline std::string search_reply(const std::string& report, const std::string& query) {
  return tool_call_reply(report, "search", json{{"queries", {query}}});
}

inline std::vector<SearchResult> results_for(const std::string& query, int n) {
  std::vector<SearchResult> out;
  for (int i = 1; i <= n; ++i) {
    out.push_back({"Result " + std::to_string(i) + " for " + query, "snippet " + std::to_string(i),
                   "https://example.org/" + std::to_string(i)});
  }
  return out;
}

// Fixed-clock registry over an in-memory mock transport; tool latency is always 0.
struct MockTools {
  std::shared_ptr<MockTransport> transport = std::make_shared<MockTransport>();
  std::shared_ptr<ChatBackend> summarizer = std::make_shared<FunctionBackend>(
      [](const PromptMessages&, const SamplingParams&) { return std::string("summary of the page"); });
  ToolsConfig config;

  ToolRegistry registry() const {
    return make_default_registry(transport, summarizer, config, [] { return std::int64_t{0}; });
  }
};

// A minimal valid trajectory of `rounds` rounds: tool calls followed by a final answer.
inline Trajectory make_trajectory(const std::string& qid, int rounds, const std::string& answer,
                                  const std::string& reference = "ref", const std::string& tool = "search") {
  Trajectory t;
  t.question = {qid, "question " + qid, reference};
  t.id = qid + ":iter:0";
  Workspace ws = initial_workspace(t.question);
  for (int r = 1; r <= rounds; ++r) {
    RoundRecord rec;
    rec.workspace = ws;
    rec.response.think = "t";
    rec.response.report = "report " + std::to_string(r);
    if (r < rounds) {
      rec.response.action = ToolCall{tool, json{{"queries", {"q"}}}};
      rec.tool_response = ToolResponse{tool, ToolStatus::ok, "obs " + std::to_string(r), 0};
    } else {
      rec.response.action = FinalAnswer{answer};
    }
    rec.raw_reply = emit_round_response(rec.response);
    t = append_round(std::move(t), rec);
    if (r < rounds) {
      Workspace next;
      next.question = ws.question;
      next.round_index = r + 1;
      next.prev_report = rec.response.report;
      next.prev_action = rec.response.action;
      next.prev_tool_response = rec.tool_response;
      ws = next;
    }
  }
  t.final_answer = answer;
  t.termination = Termination::final_answer;
  return t;
}

}  // namespace testsupport
