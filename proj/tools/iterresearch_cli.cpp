// iterresearch command line: run, bench, corpus build, stats.
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "iterresearch/harness.hpp"

namespace fs = std::filesystem;
using namespace iterresearch;

namespace {

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io, "cannot open " + path);
  auto j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw Error(Errc::invalid_argument, path + " is not valid JSON");
  return j;
}

struct AppConfig {
  BackendConfig backend;
  std::optional<BackendConfig> synthesis_backend;
  std::optional<BackendConfig> judge_backend;
  SamplingParams sampling;
  EngineBudget budget;
  ToolsConfig tools;
  HttpTransportConfig transport;
  BenchConfig bench;
  GspoConfig gspo;
};

AppConfig load_config(const std::string& path) {
  AppConfig c;
  if (path.empty()) return c;
  const auto j = read_json_file(path);
  if (auto it = j.find("backend"); it != j.end()) it->get_to(c.backend);
  if (auto it = j.find("synthesis_backend"); it != j.end()) c.synthesis_backend = it->get<BackendConfig>();
  if (auto it = j.find("judge_backend"); it != j.end()) c.judge_backend = it->get<BackendConfig>();
  if (auto it = j.find("sampling"); it != j.end()) it->get_to(c.sampling);
  if (auto it = j.find("budget"); it != j.end()) it->get_to(c.budget);
  if (auto it = j.find("tools"); it != j.end()) it->get_to(c.tools);
  if (auto it = j.find("transport"); it != j.end()) it->get_to(c.transport);
  if (auto it = j.find("bench"); it != j.end()) it->get_to(c.bench);
  if (auto it = j.find("gspo"); it != j.end()) it->get_to(c.gspo);
  return c;
}

// Scripted replies keyed by role, then "<item>/<agent>", "<item>" or "default".
class Script {
 public:
  explicit Script(json j) : j_(std::move(j)) {}

  std::shared_ptr<ChatBackend> backend(const std::string& role, const std::vector<std::string>& keys) const {
    auto section = j_.find(role);
    if (section == j_.end()) return nullptr;
    for (const auto& key : keys) {
      if (auto it = section->find(key); it != section->end()) {
        return std::make_shared<ScriptedBackend>(it->get<std::vector<std::string>>());
      }
    }
    return nullptr;
  }

 private:
  json j_;
};

// Offline stand-in for the page summarizer: echoes the start of the page content.
std::shared_ptr<ChatBackend> echo_summarizer() {
  return std::make_shared<FunctionBackend>([](const PromptMessages& m, const SamplingParams&) {
    const auto& prompt = m.back().content;
    const std::string marker = "Page content:\n";
    auto at = prompt.find(marker);
    std::string content = at == std::string::npos ? prompt : prompt.substr(at + marker.size());
    at = content.find("\n\nWrite a focused summary");
    if (at != std::string::npos) content.resize(at);
    return truncate_utf8(trim(content), 800, "...");
  });
}

struct Runtime {
  AppConfig config;
  std::optional<Script> script;
  std::shared_ptr<Transport> transport;
  std::shared_ptr<ChatBackend> live_backend;
  std::shared_ptr<ChatBackend> summarizer;
  std::unique_ptr<ToolRegistry> registry;

  std::shared_ptr<ChatBackend> research(const std::string& item, int agent) const {
    if (!script) return live_backend;
    auto b = script->backend("research", {item + "/" + std::to_string(agent), item, "default"});
    if (!b) throw Error(Errc::invalid_argument, "script has no research replies for " + item);
    return b;
  }
  std::shared_ptr<ChatBackend> synthesis(const std::string& item) const {
    if (!script) {
      return config.synthesis_backend ? std::make_shared<HttpChatBackend>(*config.synthesis_backend) : live_backend;
    }
    auto b = script->backend("synthesis", {item, "default"});
    if (!b) throw Error(Errc::invalid_argument, "script has no synthesis replies for " + item);
    return b;
  }
  std::shared_ptr<ChatBackend> judge(const std::string& item) const {
    if (!script) return config.judge_backend ? std::make_shared<HttpChatBackend>(*config.judge_backend) : live_backend;
    auto b = script->backend("judge", {item, "default"});
    // Exact matches never reach the judge, so a script may omit it.
    return b ? b : std::make_shared<ScriptedBackend>(std::vector<std::string>{});
  }
};

struct CommonOptions {
  std::string config_path, script_path, fixtures_dir;
  std::string log_level = "info";
};

Runtime make_runtime(const CommonOptions& o) {
  Runtime rt;
  rt.config = load_config(o.config_path);
  if (!o.script_path.empty()) rt.script.emplace(read_json_file(o.script_path));
  if (!o.fixtures_dir.empty()) {
    rt.transport = std::make_shared<MockTransport>(o.fixtures_dir);
  } else {
    rt.transport = std::make_shared<HttpTransport>(rt.config.transport);
  }
  if (rt.script) {
    rt.summarizer = echo_summarizer();
  } else {
    validate_backend_config(rt.config.backend);
    rt.live_backend = std::make_shared<HttpChatBackend>(rt.config.backend);
    rt.summarizer = rt.live_backend;
  }
  rt.registry = std::make_unique<ToolRegistry>(make_default_registry(rt.transport, rt.summarizer, rt.config.tools));
  return rt;
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  for (std::string part; std::getline(ss, part, ',');) {
    part = trim(part);
    if (part.empty()) continue;
    try {
      out.push_back(std::stoi(part));
    } catch (const std::exception&) {
      throw Error(Errc::invalid_argument, "not an integer: " + part);
    }
    if (out.back() < 1) throw Error(Errc::invalid_argument, "values must be >= 1");
  }
  return out;
}

void write_jsonl(const fs::path& path, const std::vector<json>& lines) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::io, "cannot write " + path.string());
  for (const auto& j : lines) out << dump_json(j) << '\n';
}

struct RunOptions {
  std::string question, id = "q", reference, mode = "iter", out;
  int parallel = 1;
  std::int64_t seed = -1;
};

int cmd_run(const CommonOptions& common, const RunOptions& o) {
  auto rt = make_runtime(common);
  Question q{o.id, o.question, o.reference.empty() ? std::nullopt : std::optional<std::string>(o.reference)};
  SamplingParams sampling = rt.config.sampling;
  if (o.seed >= 0) sampling.seed = o.seed;
  const RunMode mode = o.mode == "mono" ? RunMode::mono : RunMode::iter;
  if (o.mode != "iter" && o.mode != "mono") throw Error(Errc::invalid_argument, "--mode must be iter or mono");

  std::mutex log_mu;
  std::vector<json> log;
  const auto on_round = [&](const RoundTiming& t) {
    std::lock_guard lock(log_mu);
    spdlog::info("{} round {}: {} prompt chars, model {} ms, tool {} ms", t.trajectory_id, t.round_index,
                 t.prompt_chars, t.model_ms, t.tool_ms);
    log.push_back(t);
  };

  json result;
  std::vector<json> trajectories, outcomes;
  if (o.parallel <= 1) {
    auto backend = rt.research(q.id, 1);
    const auto t = run_research(mode, q, rt.config.budget, *backend, *rt.registry, sampling, {"", on_round});
    trajectories.push_back(t);
    result = json{{"answer", t.final_answer ? json(*t.final_answer) : json(nullptr)},
                  {"termination", to_string(t.termination)},
                  {"rounds", t.rounds.size()}};
  } else {
    ResearchConfig rc{rt.config.budget, sampling, mode, rt.config.bench.agent_permits,
                      rt.config.bench.count_forced_final, on_round};
    auto run = run_research_synthesis(
        q, o.parallel, rc, [&](int agent) { return rt.research(q.id, agent); }, *rt.synthesis(q.id), *rt.registry);
    for (const auto& t : run.research.trajectories) trajectories.push_back(t);
    for (const auto& oc : run.research.outcomes) outcomes.push_back(oc);
    result = json{{"answer", run.synthesis.final_answer},
                  {"outcomes_used", run.synthesis.outcomes_used},
                  {"bypassed", run.synthesis.bypassed},
                  {"justification", run.synthesis.justification}};
  }
  if (!o.out.empty()) {
    const fs::path dir(o.out);
    write_jsonl(dir / "trajectories.jsonl", trajectories);
    write_jsonl(dir / "run_log.jsonl", log);
    if (!outcomes.empty()) write_jsonl(dir / "outcomes.jsonl", outcomes);
  }
  std::cout << result.dump(2) << '\n';
  return 0;
}

struct BenchOptions {
  std::string dataset, mode = "iter", out = "bench_out", sweep;
  int n = 0;
  std::int64_t seed = -1;
};

int cmd_bench(const CommonOptions& common, const BenchOptions& o) {
  auto rt = make_runtime(common);
  const auto dataset = load_dataset(o.dataset);
  BenchConfig config = rt.config.bench;
  config.budget = rt.config.budget;
  config.sampling = rt.config.sampling;
  if (o.seed >= 0) config.sampling.seed = o.seed;

  BenchBackends backends;
  backends.research = [&](const BenchmarkItem& item, int agent) { return rt.research(item.id, agent); };
  backends.synthesis = [&](const BenchmarkItem& item) { return rt.synthesis(item.id); };
  backends.judge = [&](const BenchmarkItem& item) { return rt.judge(item.id); };

  if (o.mode == "synthesis-n") {
    std::vector<int> ns = o.sweep.empty() ? std::vector<int>{} : parse_int_list(o.sweep);
    if (ns.empty() && o.n > 0) ns = {o.n};
    if (ns.empty()) ns = {1, 2, 4, 8, 16};
    const auto reports = run_sweep(dataset, ns, config, backends, *rt.registry, o.out);
    json summary = json::array();
    for (std::size_t i = 0; i < ns.size(); ++i) {
      std::cout << "n=" << ns[i] << " pass@1=" << reports[i].pass_at_1 << " items=" << reports[i].num_items << '\n';
      summary.push_back({{"n", ns[i]}, {"pass_at_1", reports[i].pass_at_1}, {"num_items", reports[i].num_items}});
    }
    std::ofstream(fs::path(o.out) / "sweep.json") << summary.dump(2) << '\n';
    return 0;
  }

  config.mode = parse_bench_mode(o.mode);
  if (config.mode.kind == BenchMode::Kind::synthesis && o.n > 0) config.mode.n = o.n;
  const auto report = run_benchmark(dataset, config, backends, *rt.registry, o.out);
  for (const auto& id : report.skipped_items) std::cout << "skipped (already persisted): " << id << '\n';
  std::cout << "mode=" << report.mode << " pass@1=" << report.pass_at_1 << " items=" << report.num_items << '\n';
  return 0;
}

struct CorpusOptionsCli {
  std::string trajectories, out = "corpus.jsonl", stats_out;
  int dp_size = 0;
  std::uint64_t seed = 0;
  bool rft_only = false;
};

int cmd_corpus_build(const CommonOptions& common, const CorpusOptionsCli& o) {
  const auto config = load_config(common.config_path);
  // Tool specs only feed prompt rendering here, so no live transport or backend is needed.
  auto registry = make_default_registry(std::make_shared<MockTransport>(), echo_summarizer(), config.tools);
  CorpusOptions options;
  options.gspo = config.gspo;
  if (o.dp_size > 0) options.gspo.dp_size = o.dp_size;
  options.seed = o.seed;
  options.rft_only = o.rft_only;
  if (config.judge_backend) {
    options.correctness.strict_exact = false;
    options.correctness.judge = make_llm_judge(std::make_shared<HttpChatBackend>(*config.judge_backend));
  }
  const auto corpus = build_corpus(load_trajectories(o.trajectories), registry.specs(), options);
  std::vector<json> lines(corpus.samples.begin(), corpus.samples.end());
  write_jsonl(o.out, lines);
  const json stats = corpus.stats;
  if (!o.stats_out.empty()) std::ofstream(o.stats_out) << stats.dump(2) << '\n';
  std::cout << stats.dump(2) << '\n';
  return 0;
}

int cmd_stats(const std::string& trajectories, const std::string& store) {
  std::vector<Trajectory> ts = store.empty() ? load_trajectories(trajectories) : load_stored_trajectories(store);
  std::cout << json(trajectory_stats(ts)).dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"iterresearch: iterative deep-research runtime"};
  app.require_subcommand(1);
  CommonOptions common;
  app.add_option("--config", common.config_path, "JSON config file")->check(CLI::ExistingFile);
  app.add_option("--script", common.script_path, "scripted replies (offline mode)")->check(CLI::ExistingFile);
  app.add_option("--fixtures", common.fixtures_dir, "mock tool fixture directory")->check(CLI::ExistingDirectory);
  app.add_option("--log-level", common.log_level, "trace|debug|info|warn|error|off");

  RunOptions run;
  auto* run_cmd = app.add_subcommand("run", "answer a single question");
  run_cmd->add_option("--question", run.question, "question text")->required();
  run_cmd->add_option("--id", run.id, "question id");
  run_cmd->add_option("--reference", run.reference, "reference answer (optional)");
  run_cmd->add_option("--mode", run.mode, "iter or mono");
  run_cmd->add_option("--parallel", run.parallel, "research agents; > 1 adds a synthesis step")
      ->check(CLI::Range(1, 64));
  run_cmd->add_option("--seed", run.seed, "sampling seed");
  run_cmd->add_option("--out", run.out, "directory for trajectories and the run log");

  BenchOptions bench;
  auto* bench_cmd = app.add_subcommand("bench", "evaluate a JSONL dataset");
  bench_cmd->add_option("--dataset", bench.dataset, "JSONL dataset")->required()->check(CLI::ExistingFile);
  bench_cmd->add_option("--mode", bench.mode, "iter | mono | synthesis-<n> | synthesis-n");
  bench_cmd->add_option("--n", bench.n, "agents for synthesis modes")->check(CLI::Range(1, 1024));
  bench_cmd->add_option("--sweep", bench.sweep, "comma-separated n values for synthesis-n");
  bench_cmd->add_option("--seed", bench.seed, "sampling seed");
  bench_cmd->add_option("--out", bench.out, "output directory (resumable)");

  CorpusOptionsCli corpus;
  auto* corpus_cmd = app.add_subcommand("corpus", "training corpus tools");
  corpus_cmd->require_subcommand(1);
  auto* build_cmd = corpus_cmd->add_subcommand("build", "decompose trajectories into per-round samples");
  build_cmd->add_option("--trajectories", corpus.trajectories, "trajectory JSONL")->required()->check(CLI::ExistingFile);
  build_cmd->add_option("--dp-size", corpus.dp_size, "data-parallel size")->check(CLI::Range(1, 1 << 20));
  build_cmd->add_option("--seed", corpus.seed, "downsampling seed");
  build_cmd->add_option("--out", corpus.out, "sample JSONL output");
  build_cmd->add_option("--stats-out", corpus.stats_out, "stats JSON output");
  build_cmd->add_flag("--rft-only", corpus.rft_only, "keep only correct trajectories");

  std::string stats_file, stats_store;
  auto* stats_cmd = app.add_subcommand("stats", "turn and tool-use analytics");
  auto* file_opt = stats_cmd->add_option("--trajectories", stats_file, "trajectory JSONL")->check(CLI::ExistingFile);
  auto* store_opt = stats_cmd->add_option("--store", stats_store, "bench output directory")->check(CLI::ExistingDirectory);
  file_opt->excludes(store_opt);

  CLI11_PARSE(app, argc, argv);

  auto logger = spdlog::stderr_color_mt("iterresearch");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::from_str(common.log_level));

  try {
    if (*run_cmd) return cmd_run(common, run);
    if (*bench_cmd) return cmd_bench(common, bench);
    if (*build_cmd) return cmd_corpus_build(common, corpus);
    if (*stats_cmd) {
      if (stats_file.empty() && stats_store.empty()) throw Error(Errc::invalid_argument, "--trajectories or --store required");
      return cmd_stats(stats_file, stats_store);
    }
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
