#include "iterresearch/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <spdlog/spdlog.h>

#include "iterresearch/prompt_templates.hpp"

namespace iterresearch {

namespace fs = std::filesystem;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

// Store files may end in a partial line after an interrupted write; such lines are dropped.
std::vector<json> read_store(const fs::path& path) {
  std::vector<json> out;
  if (!fs::exists(path)) return out;
  int n = 0;
  for (const auto& line : split_lines(read_file(path.string()))) {
    ++n;
    if (trim(line).empty()) continue;
    auto j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      spdlog::warn("{}:{}: dropping unreadable store line", path.string(), n);
      continue;
    }
    out.push_back(std::move(j));
  }
  return out;
}

void write_store(const fs::path& path, const std::vector<json>& lines) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::io, "cannot write " + path.string());
  for (const auto& j : lines) out << dump_json(j) << '\n';
}

void append_store(const fs::path& path, const std::vector<json>& lines) {
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw Error(Errc::io, "cannot append to " + path.string());
  for (const auto& j : lines) out << dump_json(j) << '\n';
  out.flush();
}

// Single pass so substituted values are never rescanned for placeholders.
std::string fill(std::string_view tmpl, const std::map<std::string, std::string>& values) {
  std::string out;
  std::size_t pos = 0;
  while (pos < tmpl.size()) {
    const auto open = tmpl.find("{{", pos);
    if (open == std::string_view::npos) break;
    const auto close = tmpl.find("}}", open + 2);
    if (close == std::string_view::npos) break;
    out.append(tmpl.substr(pos, open - pos));
    const std::string key(tmpl.substr(open + 2, close - open - 2));
    if (auto it = values.find(key); it != values.end()) {
      out.append(it->second);
    } else {
      out.append(tmpl.substr(open, close + 2 - open));
    }
    pos = close + 2;
  }
  out.append(tmpl.substr(pos));
  return out;
}

const SamplingParams kJudgeSampling{0.0, 1.0, 1, 0};

}  // namespace

std::vector<BenchmarkItem> parse_dataset(const std::string& text) {
  std::vector<BenchmarkItem> items;
  std::set<std::string> ids;
  int n = 0;
  for (const auto& line : split_lines(text)) {
    ++n;
    if (trim(line).empty()) continue;
    const auto where = "line " + std::to_string(n) + ": ";
    auto j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw Error(Errc::dataset_parse, where + "not a JSON object");
    BenchmarkItem item;
    try {
      item.id = j.at("id").is_string() ? j.at("id").get<std::string>() : j.at("id").dump();
      j.at("question").get_to(item.question_text);
      j.at("answer").get_to(item.reference_answer);
      if (auto it = j.find("tags"); it != j.end() && !it->is_null()) it->get_to(item.tags);
    } catch (const json::exception& e) {
      throw Error(Errc::dataset_parse, where + e.what());
    }
    if (item.id.empty()) throw Error(Errc::dataset_parse, where + "empty id");
    if (trim(item.question_text).empty()) throw Error(Errc::dataset_parse, where + "empty question");
    if (!ids.insert(item.id).second) throw Error(Errc::dataset_parse, where + "duplicate id " + item.id);
    items.push_back(std::move(item));
  }
  return items;
}

std::vector<BenchmarkItem> load_dataset(const std::string& path) { return parse_dataset(read_file(path)); }

double pass_at_k(const AttemptMatrix& matrix, int k) {
  if (k < 1) throw Error(Errc::invalid_argument, "k must be >= 1");
  if (matrix.empty()) throw Error(Errc::invalid_argument, "no problems");
  std::size_t solved = 0;
  for (std::size_t i = 0; i < matrix.size(); ++i) {
    const auto& attempts = matrix[i];
    if (attempts.size() < static_cast<std::size_t>(k)) {
      throw Error(Errc::insufficient_attempts, "problem " + std::to_string(i) + " has " +
                                                   std::to_string(attempts.size()) + " attempts, k = " +
                                                   std::to_string(k));
    }
    if (std::any_of(attempts.begin(), attempts.begin() + k, [](bool b) { return b; })) ++solved;
  }
  return static_cast<double>(solved) / static_cast<double>(matrix.size());
}

Verdict parse_verdict(std::string_view reply) {
  for (const auto& line : split_lines(std::string(reply))) {
    auto t = trim(line);
    if (t.empty()) continue;
    std::size_t i = 0;
    while (i < t.size() && !std::isalpha(static_cast<unsigned char>(t[i]))) ++i;
    std::string word;
    for (; i < t.size() && std::isalpha(static_cast<unsigned char>(t[i])); ++i) {
      word += static_cast<char>(std::toupper(static_cast<unsigned char>(t[i])));
    }
    if (word == "INCORRECT") return Verdict::incorrect;
    if (word == "CORRECT") return Verdict::correct;
    return Verdict::unparseable;
  }
  return Verdict::unparseable;
}

PromptMessages render_judge_prompt(const std::string& question, const std::string& predicted,
                                   const std::string& reference) {
  return {{Role::user,
           fill(prompts::judge, {{"question", question}, {"predicted", predicted}, {"reference", reference}})}};
}

bool judge_answer(const std::string& question, const std::string& predicted, const std::string& reference,
                  ChatBackend& backend) {
  if (trim(predicted).empty()) return false;
  if (normalize_answer(predicted) == normalize_answer(reference)) return true;
  const auto prompt = render_judge_prompt(question, predicted, reference);
  for (int attempt = 0; attempt < 2; ++attempt) {
    const auto reply = backend.complete(prompt, kJudgeSampling);
    switch (parse_verdict(reply)) {
      case Verdict::correct:
        return true;
      case Verdict::incorrect:
        return false;
      case Verdict::unparseable:
        spdlog::warn("unparseable judge verdict: {}", truncate_utf8(reply, 120, "..."));
        break;
    }
  }
  return false;
}

AnswerJudge make_llm_judge(std::shared_ptr<ChatBackend> backend) {
  return [backend = std::move(backend)](const std::string& q, const std::string& p, const std::string& r) {
    return judge_answer(q, p, r, *backend);
  };
}

void to_json(json& j, const TrajectoryStats& s) {
  j = json{{"trajectories", s.trajectories}, {"avg_turns", s.avg_turns},     {"max_turns", s.max_turns},
           {"tool_calls", s.tool_calls},     {"tool_counts", s.tool_counts}, {"tool_frequency", s.tool_frequency}};
}

TrajectoryStats trajectory_stats(const std::vector<Trajectory>& trajectories) {
  if (trajectories.empty()) throw Error(Errc::empty_input, "no trajectories");
  TrajectoryStats s;
  s.trajectories = trajectories.size();
  std::int64_t turns = 0;
  for (const auto& t : trajectories) {
    const int n = static_cast<int>(t.rounds.size());
    turns += n;
    s.max_turns = std::max(s.max_turns, n);
    for (const auto& r : t.rounds) {
      if (const auto* call = std::get_if<ToolCall>(&r.response.action)) {
        ++s.tool_counts[call->tool_name];
        ++s.tool_calls;
      }
    }
  }
  s.avg_turns = static_cast<double>(turns) / static_cast<double>(trajectories.size());
  for (const auto& [name, count] : s.tool_counts) {
    s.tool_frequency[name] = 100.0 * static_cast<double>(count) / static_cast<double>(s.tool_calls);
  }
  return s;
}

BenchMode parse_bench_mode(std::string_view text) {
  if (text == "iter") return {BenchMode::Kind::iter, 1};
  if (text == "mono") return {BenchMode::Kind::mono, 1};
  constexpr std::string_view prefix = "synthesis-";
  if (text.substr(0, prefix.size()) == prefix) {
    const auto digits = text.substr(prefix.size());
    if (!digits.empty() && digits.size() <= 4 &&
        std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; })) {
      const int n = std::stoi(std::string(digits));
      if (n >= 1) return {BenchMode::Kind::synthesis, n};
    }
  }
  throw Error(Errc::invalid_argument, "unknown bench mode '" + std::string(text) + "'");
}

std::string to_string(const BenchMode& mode) {
  switch (mode.kind) {
    case BenchMode::Kind::iter:
      return "iter";
    case BenchMode::Kind::mono:
      return "mono";
    case BenchMode::Kind::synthesis:
      return "synthesis-" + std::to_string(mode.n);
  }
  return "iter";
}

void validate_bench_config(const BenchConfig& c) {
  validate_budget(c.budget);
  validate_sampling(c.sampling);
  if (c.mode.n < 1) throw Error(Errc::invalid_argument, "n must be >= 1");
  if (c.agent_permits < 1 || c.item_permits < 1) throw Error(Errc::invalid_argument, "permits must be >= 1");
}

void to_json(json& j, const BenchConfig& c) {
  j = json{{"mode", to_string(c.mode)},
           {"budget", c.budget},
           {"sampling", c.sampling},
           {"agent_permits", c.agent_permits},
           {"item_permits", c.item_permits},
           {"count_forced_final", c.count_forced_final}};
}

void from_json(const json& j, BenchConfig& c) {
  if (auto it = j.find("budget"); it != j.end()) it->get_to(c.budget);
  if (auto it = j.find("sampling"); it != j.end()) it->get_to(c.sampling);
  c.agent_permits = j.value("agent_permits", c.agent_permits);
  c.item_permits = j.value("item_permits", c.item_permits);
  c.count_forced_final = j.value("count_forced_final", c.count_forced_final);
}

void to_json(json& j, const ItemVerdict& v) {
  j = json{{"item_id", v.item_id},
           {"predicted", v.predicted},
           {"reference", v.reference},
           {"correct", v.correct},
           {"research_runs", v.research_runs},
           {"synthesis_calls", v.synthesis_calls},
           {"failure", v.failure}};
}

void from_json(const json& j, ItemVerdict& v) {
  j.at("item_id").get_to(v.item_id);
  v.predicted = j.value("predicted", std::string{});
  v.reference = j.value("reference", std::string{});
  j.at("correct").get_to(v.correct);
  v.research_runs = j.value("research_runs", 0);
  v.synthesis_calls = j.value("synthesis_calls", 0);
  v.failure = j.value("failure", std::string{});
}

void to_json(json& j, const RunReport& r) {
  j = json{{"mode", r.mode},         {"num_items", r.num_items}, {"pass_at_1", r.pass_at_1},
           {"verdicts", r.verdicts}, {"analytics", r.analytics}, {"config", r.config}};
}

namespace {

struct ItemRecords {
  std::vector<json> trajectories, outcomes, synthesis;
  ItemVerdict verdict;
};

json trajectory_line(const std::string& item_id, int agent_index, const Trajectory& t) {
  return json{{"item_id", item_id}, {"agent_index", agent_index}, {"trajectory", t}};
}

ItemRecords run_item(const BenchmarkItem& item, const BenchConfig& config, const BenchBackends& backends,
                     const ToolRegistry& registry) {
  ItemRecords rec;
  auto& v = rec.verdict;
  v.item_id = item.id;
  v.reference = item.reference_answer;
  const Question question{item.id, item.question_text, item.reference_answer};
  try {
    if (config.mode.kind == BenchMode::Kind::synthesis) {
      ResearchConfig rc{config.budget, config.sampling, RunMode::iter, config.agent_permits,
                        config.count_forced_final, {}};
      const auto research = [&](int agent) { return backends.research(item, agent); };
      auto par = run_parallel_research(question, config.mode.n, rc, research, registry);
      v.research_runs = static_cast<int>(par.trajectories.size());
      for (std::size_t i = 0; i < par.trajectories.size(); ++i) {
        rec.trajectories.push_back(trajectory_line(item.id, static_cast<int>(i) + 1, par.trajectories[i]));
        json o = par.outcomes[i];
        o["item_id"] = item.id;
        rec.outcomes.push_back(std::move(o));
      }
      auto synth_backend = backends.synthesis ? backends.synthesis(item) : backends.research(item, 0);
      if (!synth_backend) throw Error(Errc::invalid_argument, "no synthesis backend");
      const auto result = synthesize(question, par.outcomes, *synth_backend, config.sampling);
      v.synthesis_calls = result.bypassed ? 0 : 1;
      rec.synthesis.push_back(json{{"item_id", item.id}, {"result", result}});
      v.predicted = result.final_answer;
    } else {
      const auto mode = config.mode.kind == BenchMode::Kind::mono ? RunMode::mono : RunMode::iter;
      auto backend = backends.research(item, 1);
      if (!backend) throw Error(Errc::invalid_argument, "no research backend");
      const auto t = run_research(mode, question, config.budget, *backend, registry, config.sampling);
      v.research_runs = 1;
      rec.trajectories.push_back(trajectory_line(item.id, 1, t));
      const auto outcome = outcome_from_trajectory(t, 1, config.count_forced_final);
      if (outcome.flagged) {
        v.failure = "no usable answer (" + std::string(to_string(t.termination)) + ")";
      } else {
        v.predicted = outcome.answer;
      }
    }
    if (v.failure.empty()) {
      auto judge = backends.judge ? backends.judge(item) : nullptr;
      if (!judge) throw Error(Errc::invalid_argument, "no judge backend");
      v.correct = judge_answer(item.question_text, v.predicted, item.reference_answer, *judge);
    }
  } catch (const std::exception& e) {
    v.correct = false;
    v.failure = e.what();
    spdlog::warn("item {} failed: {}", item.id, e.what());
  }
  return rec;
}

const char* kTrajectoryFile = "trajectories.jsonl";
const char* kOutcomeFile = "outcomes.jsonl";
const char* kSynthesisFile = "synthesis.jsonl";
const char* kVerdictFile = "verdicts.jsonl";

}  // namespace

RunReport run_benchmark(const std::vector<BenchmarkItem>& dataset, const BenchConfig& config,
                        const BenchBackends& backends, const ToolRegistry& registry, const std::string& out_dir) {
  validate_bench_config(config);
  if (!backends.research) throw Error(Errc::invalid_argument, "a research backend provider is required");
  const fs::path root(out_dir);
  fs::create_directories(root);

  std::set<std::string> done;
  for (const auto& j : read_store(root / kVerdictFile)) done.insert(j.value("item_id", std::string{}));
  for (const char* file : {kTrajectoryFile, kOutcomeFile, kSynthesisFile}) {
    auto lines = read_store(root / file);
    const auto before = lines.size();
    std::erase_if(lines, [&](const json& j) { return !done.count(j.value("item_id", std::string{})); });
    if (lines.size() != before || fs::exists(root / file)) write_store(root / file, lines);
  }

  std::vector<const BenchmarkItem*> pending;
  std::vector<std::string> skipped;
  for (const auto& item : dataset) {
    if (done.count(item.id)) {
      skipped.push_back(item.id);
    } else {
      pending.push_back(&item);
    }
  }
  if (!skipped.empty()) spdlog::info("resuming: {} item(s) already persisted", skipped.size());

  std::mutex store_mutex;
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i = next++; i < pending.size(); i = next++) {
      auto rec = run_item(*pending[i], config, backends, registry);
      std::lock_guard lock(store_mutex);
      append_store(root / kTrajectoryFile, rec.trajectories);
      append_store(root / kOutcomeFile, rec.outcomes);
      append_store(root / kSynthesisFile, rec.synthesis);
      append_store(root / kVerdictFile, {json(rec.verdict)});
      spdlog::info("item {}: {}", rec.verdict.item_id, rec.verdict.correct ? "correct" : "incorrect");
    }
  };
  {
    const int threads = std::clamp<int>(config.item_permits, 1, std::max<int>(1, static_cast<int>(pending.size())));
    std::vector<std::jthread> pool;
    for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
  }

  auto report = report_from_store(dataset, config, out_dir);
  report.skipped_items = std::move(skipped);
  std::ofstream(root / "report.json", std::ios::binary | std::ios::trunc) << json(report).dump(2) << '\n';
  return report;
}

RunReport report_from_store(const std::vector<BenchmarkItem>& dataset, const BenchConfig& config,
                            const std::string& out_dir) {
  const fs::path root(out_dir);
  std::map<std::string, ItemVerdict> by_id;
  for (const auto& j : read_store(root / kVerdictFile)) {
    auto v = j.get<ItemVerdict>();
    by_id[v.item_id] = std::move(v);
  }
  RunReport r;
  r.mode = to_string(config.mode);
  r.config = config;
  int correct = 0;
  for (const auto& item : dataset) {
    if (auto it = by_id.find(item.id); it != by_id.end()) {
      correct += it->second.correct ? 1 : 0;
      r.verdicts.push_back(it->second);
    }
  }
  r.num_items = static_cast<int>(r.verdicts.size());
  r.pass_at_1 = r.num_items == 0 ? 0.0 : static_cast<double>(correct) / r.num_items;

  std::set<std::string> in_dataset;
  for (const auto& item : dataset) in_dataset.insert(item.id);
  std::vector<Trajectory> trajectories;
  for (const auto& j : read_store(root / kTrajectoryFile)) {
    if (in_dataset.count(j.value("item_id", std::string{}))) trajectories.push_back(j.at("trajectory").get<Trajectory>());
  }
  if (!trajectories.empty()) r.analytics = trajectory_stats(trajectories);
  return r;
}

std::vector<Trajectory> load_stored_trajectories(const std::string& out_dir) {
  std::vector<Trajectory> out;
  for (const auto& j : read_store(fs::path(out_dir) / kTrajectoryFile)) out.push_back(j.at("trajectory").get<Trajectory>());
  return out;
}

std::vector<Trajectory> load_trajectories(const std::string& path) {
  std::vector<Trajectory> out;
  int n = 0;
  for (const auto& line : split_lines(read_file(path))) {
    ++n;
    if (trim(line).empty()) continue;
    auto j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      throw Error(Errc::dataset_parse, path + ":" + std::to_string(n) + ": not a JSON object");
    }
    try {
      out.push_back(j.contains("trajectory") ? j.at("trajectory").get<Trajectory>() : j.get<Trajectory>());
    } catch (const json::exception& e) {
      throw Error(Errc::dataset_parse, path + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

std::vector<RunReport> run_sweep(const std::vector<BenchmarkItem>& dataset, const std::vector<int>& ns,
                                 const BenchConfig& config, const BenchBackends& backends,
                                 const ToolRegistry& registry, const std::string& out_dir) {
  if (ns.empty()) throw Error(Errc::invalid_argument, "sweep needs at least one n");
  std::vector<RunReport> reports;
  for (int n : ns) {
    BenchConfig c = config;
    c.mode = {BenchMode::Kind::synthesis, n};
    reports.push_back(run_benchmark(dataset, c, backends, registry, (fs::path(out_dir) / ("n" + std::to_string(n))).string()));
  }
  return reports;
}

}  // namespace iterresearch
