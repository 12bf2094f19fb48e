#pragma once

#include <chrono>
#include <map>
#include <memory>
#include <semaphore>
#include <string>
#include <vector>

#include "iterresearch/backend.hpp"
#include "iterresearch/core.hpp"
#include "iterresearch/protocol.hpp"

namespace iterresearch {

inline constexpr std::size_t kResultsPerQuery = 10;

struct SearchResult {
  std::string title;
  std::string snippet;
  std::string url;

  bool operator==(const SearchResult&) const = default;
};

struct ScholarResult {
  std::string title;
  std::vector<std::string> authors;
  std::string venue;
  std::int64_t citation_count = 0;
  std::string url;

  bool operator==(const ScholarResult&) const = default;
};

struct CodeRunResult {
  std::string stdout_text;
  std::string stderr_text;
  int exit_status = 0;
  bool timed_out = false;
};

struct SandboxLimits {
  std::chrono::milliseconds wall_time{30'000};
  std::size_t memory_bytes = 512ull << 20;
  bool no_network = true;
};

struct ToolsConfig {
  std::size_t batch_cap = 8;
  std::size_t content_cap = 4000;
  std::size_t page_char_cap = 60'000;
  std::chrono::milliseconds search_timeout{30'000};
  std::chrono::milliseconds scholar_timeout{30'000};
  std::chrono::milliseconds visit_timeout{180'000};
  std::chrono::milliseconds code_timeout{35'000};
  SandboxLimits sandbox;
  std::vector<std::string> interpreter{"python3", "-I", "-"};
  int sandbox_permits = 2;
};

void to_json(json& j, const ToolsConfig& c);
void from_json(const json& j, ToolsConfig& c);

void to_json(json& j, const SearchResult& r);
void from_json(const json& j, SearchResult& r);
void to_json(json& j, const ScholarResult& r);
void from_json(const json& j, ScholarResult& r);

bool is_valid_url(std::string_view url);

// ---------------------------------------------------------------------------
// Transport: everything that talks to the outside world for search, scholar and visit.

class Transport {
 public:
  virtual ~Transport() = default;
  /// Each throws Error(transport) on failure.
  virtual std::vector<SearchResult> web_search(const std::string& query) = 0;
  virtual std::vector<ScholarResult> scholar_search(const std::string& query) = 0;
  virtual std::string fetch_page(const std::string& url) = 0;
};

/// Fixture-backed transport. Layout under the root directory, one JSON file per key:
///   search/<fnv1a64-hex of query>.json   {"query": ..., "results": [{title, snippet, url}, ...]}
///   scholar/<hash>.json                  {"query": ..., "results": [{title, authors, venue, citation_count, url}]}
///   pages/<hash of url>.json             {"url": ..., "content": ...} or {"url": ..., "error": ...}
/// Optional "delay_ms" in any file sleeps before answering. Missing fixtures raise transport errors.
class MockTransport final : public Transport {
 public:
  MockTransport() = default;
  explicit MockTransport(std::string fixture_root) : root_(std::move(fixture_root)) {}

  static std::string fixture_key(std::string_view query_or_url);
  /// Writes a fixture file in the layout above (used to author fixture directories).
  static void write_fixture(const std::string& root, const std::string& kind, const std::string& key,
                            const json& body);

  void add_search(const std::string& query, std::vector<SearchResult> results);
  void add_scholar(const std::string& query, std::vector<ScholarResult> results);
  void add_page(const std::string& url, std::string content);
  void add_page_error(const std::string& url, std::string message);

  std::vector<SearchResult> web_search(const std::string& query) override;
  std::vector<ScholarResult> scholar_search(const std::string& query) override;
  std::string fetch_page(const std::string& url) override;

 private:
  json lookup(const std::string& kind, const std::string& key) const;

  std::string root_;
  std::map<std::string, json> memory_;  // "<kind>/<key>" -> body
};

struct HttpTransportConfig {
  // Serper-compatible search APIs: POST {"q": query, "num": 10}.
  std::string search_url = "https://google.serper.dev/search";
  std::string scholar_url = "https://google.serper.dev/scholar";
  std::string search_key_env = "SERPER_API_KEY";
  // Reader service: GET reader_url + page url, returns page text.
  std::string reader_url = "https://r.jina.ai/";
  std::string reader_key_env = "JINA_API_KEY";
  std::chrono::milliseconds timeout{30'000};
};

void to_json(json& j, const HttpTransportConfig& c);
void from_json(const json& j, HttpTransportConfig& c);

class HttpTransport final : public Transport {
 public:
  explicit HttpTransport(HttpTransportConfig config) : config_(std::move(config)) {}

  std::vector<SearchResult> web_search(const std::string& query) override;
  std::vector<ScholarResult> scholar_search(const std::string& query) override;
  std::string fetch_page(const std::string& url) override;

 private:
  json post_query(const std::string& url, const std::string& query);
  HttpTransportConfig config_;
};

// ---------------------------------------------------------------------------
// Tool operations

using QueryResults = std::vector<std::pair<std::string, std::vector<SearchResult>>>;
using ScholarQueryResults = std::vector<std::pair<std::string, std::vector<ScholarResult>>>;

/// Throws Error(empty_batch) or Error(invalid_argument) above the batch cap; transport errors propagate.
QueryResults search(Transport& transport, const std::vector<std::string>& queries, std::size_t batch_cap);
ScholarQueryResults scholar(Transport& transport, const std::vector<std::string>& queries, std::size_t batch_cap);

struct VisitEntry {
  std::string url;
  ToolStatus status = ToolStatus::ok;
  std::string summary;  // error text when status != ok
};

/// Fetches each page and asks `summarizer` for a goal-focused summary. Per-URL failures become
/// error entries. Throws Error(empty_batch | empty_goal).
std::vector<VisitEntry> visit(Transport& transport, const std::vector<std::string>& urls, const std::string& goal,
                              ChatBackend& summarizer, std::size_t page_char_cap = 60'000);

/// Runs `source` in a child interpreter with wall-time, address-space and network limits.
/// Throws Error(sandbox_unavailable) if the interpreter cannot be started or the jail cannot be set up.
CodeRunResult run_code(const std::string& source, const SandboxLimits& limits,
                       const std::vector<std::string>& interpreter = {"python3", "-I", "-"});

std::string render_search_results(const QueryResults& results);
std::string render_scholar_results(const ScholarQueryResults& results);
std::string render_visit_entries(const std::vector<VisitEntry>& entries);
std::string render_code_result(const CodeRunResult& result);

// ---------------------------------------------------------------------------
// Registry

/// Checks `value` against the schema subset used by tool specs: type (object, array, string,
/// integer, number, boolean), properties, required, additionalProperties=false, items,
/// minItems, maxItems, minLength. Returns human-readable problems; empty means valid.
std::vector<std::string> check_schema(const json& schema, const json& value, const std::string& path = "$");

class Tool {
 public:
  virtual ~Tool() = default;
  virtual const ToolSpec& spec() const = 0;
  virtual std::chrono::milliseconds default_timeout() const = 0;
  /// Produces the rendered content for a validated call. May throw; execute() converts errors.
  virtual std::string invoke(const json& arguments, std::chrono::milliseconds deadline) = 0;
};

/// Milliseconds clock used for latency_ms; injectable so replays are byte-stable.
using MillisClock = std::function<std::int64_t()>;
MillisClock steady_millis_clock();

class ToolRegistry {
 public:
  /// Throws Error(invalid_argument) on duplicate names.
  explicit ToolRegistry(std::vector<std::shared_ptr<Tool>> tools, std::size_t content_cap = 4000,
                        MillisClock clock = steady_millis_clock());

  std::shared_ptr<Tool> find(std::string_view name) const;
  /// Specs sorted by name.
  const std::vector<ToolSpec>& specs() const { return specs_; }
  std::chrono::milliseconds timeout_for(std::string_view name) const;
  std::size_t content_cap() const { return content_cap_; }
  std::int64_t now_ms() const { return clock_(); }

 private:
  std::map<std::string, std::shared_ptr<Tool>, std::less<>> tools_;
  std::vector<ToolSpec> specs_;
  std::size_t content_cap_;
  MillisClock clock_;
};

/// Total: unknown tools, schema violations, tool exceptions and deadline overruns all come back
/// as ToolResponse with status error/timeout and readable content.
ToolResponse execute(const ToolCall& call, const ToolRegistry& registry, std::chrono::milliseconds deadline);
ToolResponse execute(const ToolCall& call, const ToolRegistry& registry);

ToolSpec search_spec(std::size_t batch_cap);
ToolSpec scholar_spec(std::size_t batch_cap);
ToolSpec visit_spec(std::size_t batch_cap);
ToolSpec code_spec();

/// Builds the four built-in tools (search, scholar, visit, code) over one transport.
ToolRegistry make_default_registry(std::shared_ptr<Transport> transport, std::shared_ptr<ChatBackend> summarizer,
                                   const ToolsConfig& config, MillisClock clock = steady_millis_clock());

}  // namespace iterresearch
