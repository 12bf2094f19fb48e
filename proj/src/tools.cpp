#include "iterresearch/tools.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <sstream>
#include <thread>

#include <spdlog/spdlog.h>

#include "http_client.hpp"
#include "iterresearch/prompt_templates.hpp"

namespace iterresearch {

namespace fs = std::filesystem;
using std::chrono::milliseconds;

// ---------------------------------------------------------------------------
// JSON codecs

void to_json(json& j, const SearchResult& r) {
  j = json{{"title", r.title}, {"snippet", r.snippet}, {"url", r.url}};
}

void from_json(const json& j, SearchResult& r) {
  r.title = j.value("title", std::string{});
  r.snippet = j.value("snippet", std::string{});
  r.url = j.value("url", std::string{});
}

void to_json(json& j, const ScholarResult& r) {
  j = json{{"title", r.title},
           {"authors", r.authors},
           {"venue", r.venue},
           {"citation_count", r.citation_count},
           {"url", r.url}};
}

void from_json(const json& j, ScholarResult& r) {
  r.title = j.value("title", std::string{});
  r.authors = j.value("authors", std::vector<std::string>{});
  r.venue = j.value("venue", std::string{});
  r.citation_count = std::max<std::int64_t>(0, j.value("citation_count", std::int64_t{0}));
  r.url = j.value("url", std::string{});
}

void to_json(json& j, const ToolsConfig& c) {
  j = json{{"batch_cap", c.batch_cap},
           {"content_cap", c.content_cap},
           {"page_char_cap", c.page_char_cap},
           {"search_timeout_ms", c.search_timeout.count()},
           {"scholar_timeout_ms", c.scholar_timeout.count()},
           {"visit_timeout_ms", c.visit_timeout.count()},
           {"code_timeout_ms", c.code_timeout.count()},
           {"sandbox_wall_time_ms", c.sandbox.wall_time.count()},
           {"sandbox_memory_bytes", c.sandbox.memory_bytes},
           {"sandbox_no_network", c.sandbox.no_network},
           {"sandbox_permits", c.sandbox_permits},
           {"interpreter", c.interpreter}};
}

void from_json(const json& j, ToolsConfig& c) {
  const ToolsConfig d;
  c.batch_cap = j.value("batch_cap", d.batch_cap);
  c.content_cap = j.value("content_cap", d.content_cap);
  c.page_char_cap = j.value("page_char_cap", d.page_char_cap);
  c.search_timeout = milliseconds(j.value("search_timeout_ms", d.search_timeout.count()));
  c.scholar_timeout = milliseconds(j.value("scholar_timeout_ms", d.scholar_timeout.count()));
  c.visit_timeout = milliseconds(j.value("visit_timeout_ms", d.visit_timeout.count()));
  c.code_timeout = milliseconds(j.value("code_timeout_ms", d.code_timeout.count()));
  c.sandbox.wall_time = milliseconds(j.value("sandbox_wall_time_ms", d.sandbox.wall_time.count()));
  c.sandbox.memory_bytes = j.value("sandbox_memory_bytes", d.sandbox.memory_bytes);
  c.sandbox.no_network = j.value("sandbox_no_network", d.sandbox.no_network);
  c.sandbox_permits = j.value("sandbox_permits", d.sandbox_permits);
  c.interpreter = j.value("interpreter", d.interpreter);
  if (c.batch_cap == 0 || c.content_cap == 0 || c.sandbox_permits < 1) {
    throw Error(Errc::invalid_argument, "tools config: batch_cap, content_cap and sandbox_permits must be positive");
  }
}

void to_json(json& j, const HttpTransportConfig& c) {
  j = json{{"search_url", c.search_url},   {"scholar_url", c.scholar_url},       {"search_key_env", c.search_key_env},
           {"reader_url", c.reader_url},   {"reader_key_env", c.reader_key_env}, {"timeout_ms", c.timeout.count()}};
}

void from_json(const json& j, HttpTransportConfig& c) {
  const HttpTransportConfig d;
  c.search_url = j.value("search_url", d.search_url);
  c.scholar_url = j.value("scholar_url", d.scholar_url);
  c.search_key_env = j.value("search_key_env", d.search_key_env);
  c.reader_url = j.value("reader_url", d.reader_url);
  c.reader_key_env = j.value("reader_key_env", d.reader_key_env);
  c.timeout = milliseconds(j.value("timeout_ms", d.timeout.count()));
}

bool is_valid_url(std::string_view url) {
  std::string_view rest;
  if (url.rfind("https://", 0) == 0) {
    rest = url.substr(8);
  } else if (url.rfind("http://", 0) == 0) {
    rest = url.substr(7);
  } else {
    return false;
  }
  const auto host_end = rest.find_first_of("/?#");
  const auto host = rest.substr(0, host_end);
  if (host.empty()) return false;
  return std::none_of(url.begin(), url.end(), [](char c) {
    return static_cast<unsigned char>(c) <= 0x20 || c == '"' || c == '<' || c == '>' || c == '\x7f';
  });
}

// ---------------------------------------------------------------------------
// Mock transport

std::string MockTransport::fixture_key(std::string_view query_or_url) { return hex64(fnv1a64(query_or_url)); }

void MockTransport::write_fixture(const std::string& root, const std::string& kind, const std::string& key,
                                  const json& body) {
  const fs::path dir = fs::path(root) / kind;
  fs::create_directories(dir);
  std::ofstream out(dir / (fixture_key(key) + ".json"));
  if (!out) throw Error(Errc::io, "cannot write fixture under " + dir.string());
  out << body.dump(2) << '\n';
}

void MockTransport::add_search(const std::string& query, std::vector<SearchResult> results) {
  memory_["search/" + fixture_key(query)] = json{{"query", query}, {"results", results}};
}

void MockTransport::add_scholar(const std::string& query, std::vector<ScholarResult> results) {
  memory_["scholar/" + fixture_key(query)] = json{{"query", query}, {"results", results}};
}

void MockTransport::add_page(const std::string& url, std::string content) {
  memory_["pages/" + fixture_key(url)] = json{{"url", url}, {"content", std::move(content)}};
}

void MockTransport::add_page_error(const std::string& url, std::string message) {
  memory_["pages/" + fixture_key(url)] = json{{"url", url}, {"error", std::move(message)}};
}

json MockTransport::lookup(const std::string& kind, const std::string& key) const {
  json body;
  if (auto it = memory_.find(kind + "/" + fixture_key(key)); it != memory_.end()) {
    body = it->second;
  } else if (!root_.empty()) {
    const fs::path file = fs::path(root_) / kind / (fixture_key(key) + ".json");
    std::ifstream in(file);
    if (!in) throw Error(Errc::transport, "no " + kind + " fixture for '" + key + "'");
    body = json::parse(in, nullptr, false);
    if (body.is_discarded()) throw Error(Errc::transport, "fixture " + file.string() + " is not valid JSON");
  } else {
    throw Error(Errc::transport, "no " + kind + " fixture for '" + key + "'");
  }
  if (auto delay = body.value("delay_ms", 0); delay > 0) std::this_thread::sleep_for(milliseconds(delay));
  if (body.contains("error")) throw Error(Errc::transport, body["error"].get<std::string>());
  return body;
}

std::vector<SearchResult> MockTransport::web_search(const std::string& query) {
  return lookup("search", query).value("results", std::vector<SearchResult>{});
}

std::vector<ScholarResult> MockTransport::scholar_search(const std::string& query) {
  return lookup("scholar", query).value("results", std::vector<ScholarResult>{});
}

std::string MockTransport::fetch_page(const std::string& url) {
  return lookup("pages", url).value("content", std::string{});
}

// ---------------------------------------------------------------------------
// Live transport

namespace {

std::string env_or_empty(const std::string& name) {
  const char* v = name.empty() ? nullptr : std::getenv(name.c_str());
  return v ? v : "";
}

std::vector<std::string> split_authors(std::string_view s) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    auto comma = s.find(',', pos);
    auto part = trim(s.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos));
    if (!part.empty()) out.push_back(std::move(part));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

}  // namespace

json HttpTransport::post_query(const std::string& url, const std::string& query) {
  detail::Headers headers;
  if (auto key = env_or_empty(config_.search_key_env); !key.empty()) headers.emplace_back("X-API-KEY", key);
  auto reply = detail::http_post(url, dump_json(json{{"q", query}, {"num", kResultsPerQuery}}), "application/json",
                                 headers, config_.timeout);
  if (reply.status != 200) {
    throw Error(Errc::transport, url + " returned HTTP " + std::to_string(reply.status));
  }
  auto body = json::parse(reply.body, nullptr, false);
  if (body.is_discarded()) throw Error(Errc::transport, url + " returned a non-JSON body");
  return body;
}

std::vector<SearchResult> HttpTransport::web_search(const std::string& query) {
  const auto body = post_query(config_.search_url, query);
  std::vector<SearchResult> out;
  for (const auto& item : body.value("organic", json::array())) {
    out.push_back({item.value("title", ""), item.value("snippet", ""), item.value("link", "")});
  }
  return out;
}

std::vector<ScholarResult> HttpTransport::scholar_search(const std::string& query) {
  const auto body = post_query(config_.scholar_url, query);
  std::vector<ScholarResult> out;
  for (const auto& item : body.value("organic", json::array())) {
    ScholarResult r;
    r.title = item.value("title", "");
    r.url = item.value("link", "");
    r.citation_count = std::max<std::int64_t>(0, item.value("citedBy", std::int64_t{0}));
    // publicationInfo looks like "A Author, B Author - Venue, 2021 - publisher".
    const std::string info = item.value("publicationInfo", "");
    const auto dash = info.find(" - ");
    r.authors = split_authors(std::string_view(info).substr(0, dash));
    if (dash != std::string::npos) {
      const auto venue_end = info.find(" - ", dash + 3);
      r.venue = trim(std::string_view(info).substr(dash + 3, venue_end == std::string::npos ? std::string::npos
                                                                                             : venue_end - dash - 3));
      // Drop a trailing ", 2021" year.
      const auto comma = r.venue.rfind(", ");
      if (comma != std::string::npos && r.venue.size() - comma == 6 &&
          std::all_of(r.venue.begin() + static_cast<std::ptrdiff_t>(comma) + 2, r.venue.end(),
                      [](unsigned char c) { return std::isdigit(c); })) {
        r.venue.resize(comma);
      }
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::string HttpTransport::fetch_page(const std::string& url) {
  detail::Headers headers;
  if (auto key = env_or_empty(config_.reader_key_env); !key.empty()) {
    headers.emplace_back("Authorization", "Bearer " + key);
  }
  auto reply = detail::http_get(config_.reader_url + url, headers, config_.timeout);
  if (reply.status != 200) throw Error(Errc::transport, url + ": reader returned HTTP " + std::to_string(reply.status));
  return reply.body;
}

// ---------------------------------------------------------------------------
// Tool operations

namespace {

void check_batch(std::size_t n, std::size_t cap) {
  if (n == 0) throw Error(Errc::empty_batch, "at least one query is required");
  if (n > cap) {
    throw Error(Errc::invalid_argument, std::to_string(n) + " queries exceed the batch cap of " + std::to_string(cap));
  }
}

template <typename Result>
std::vector<Result> top_results(std::vector<Result> results) {
  std::erase_if(results, [](const Result& r) {
    if (is_valid_url(r.url)) return false;
    spdlog::debug("dropping result with invalid url '{}'", r.url);
    return true;
  });
  if (results.size() > kResultsPerQuery) results.resize(kResultsPerQuery);
  return results;
}

}  // namespace

QueryResults search(Transport& transport, const std::vector<std::string>& queries, std::size_t batch_cap) {
  check_batch(queries.size(), batch_cap);
  QueryResults out;
  for (const auto& q : queries) out.emplace_back(q, top_results(transport.web_search(q)));
  return out;
}

ScholarQueryResults scholar(Transport& transport, const std::vector<std::string>& queries, std::size_t batch_cap) {
  check_batch(queries.size(), batch_cap);
  ScholarQueryResults out;
  for (const auto& q : queries) out.emplace_back(q, top_results(transport.scholar_search(q)));
  return out;
}

std::vector<VisitEntry> visit(Transport& transport, const std::vector<std::string>& urls, const std::string& goal,
                              ChatBackend& summarizer, std::size_t page_char_cap) {
  if (urls.empty()) throw Error(Errc::empty_batch, "at least one url is required");
  if (trim(goal).empty()) throw Error(Errc::empty_goal, "goal must be non-empty");
  std::vector<VisitEntry> out;
  for (const auto& url : urls) {
    try {
      if (!is_valid_url(url)) throw Error(Errc::invalid_argument, "not a valid http(s) url");
      const auto page = truncate_utf8(transport.fetch_page(url), page_char_cap, "\n[page truncated]");
      std::string prompt(prompts::visit_summary);
      for (const auto& [key, value] : {std::pair<std::string, std::string>{"{{goal}}", goal},
                                       {"{{url}}", url},
                                       {"{{content}}", page}}) {
        if (auto at = prompt.find(key); at != std::string::npos) prompt.replace(at, key.size(), value);
      }
      auto summary = summarizer.complete({{Role::user, prompt}}, SamplingParams{});
      out.push_back({url, ToolStatus::ok, trim(summary)});
    } catch (const std::exception& e) {
      out.push_back({url, ToolStatus::error, e.what()});
    }
  }
  return out;
}

std::string render_search_results(const QueryResults& results) {
  std::ostringstream os;
  bool first = true;
  for (const auto& [query, hits] : results) {
    if (!first) os << "\n\n";
    first = false;
    os << "Results for \"" << query << "\":";
    if (hits.empty()) os << "\n(no results)";
    for (std::size_t i = 0; i < hits.size(); ++i) {
      os << '\n' << i + 1 << ". " << hits[i].title << "\n   URL: " << hits[i].url << "\n   " << hits[i].snippet;
    }
  }
  return os.str();
}

std::string render_scholar_results(const ScholarQueryResults& results) {
  std::ostringstream os;
  bool first = true;
  for (const auto& [query, hits] : results) {
    if (!first) os << "\n\n";
    first = false;
    os << "Scholar results for \"" << query << "\":";
    if (hits.empty()) os << "\n(no results)";
    for (std::size_t i = 0; i < hits.size(); ++i) {
      const auto& h = hits[i];
      std::string authors;
      for (const auto& a : h.authors) authors += (authors.empty() ? "" : ", ") + a;
      os << '\n' << i + 1 << ". " << h.title << "\n   Authors: " << (authors.empty() ? "unknown" : authors)
         << " | Venue: " << (h.venue.empty() ? "unknown" : h.venue) << " | Citations: " << h.citation_count
         << "\n   URL: " << h.url;
    }
  }
  return os.str();
}

std::string render_visit_entries(const std::vector<VisitEntry>& entries) {
  std::ostringstream os;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (i) os << "\n\n";
    os << '[' << i + 1 << "] " << entries[i].url << " (" << to_string(entries[i].status) << ")\n" << entries[i].summary;
  }
  return os.str();
}

std::string render_code_result(const CodeRunResult& r) {
  std::string out;
  if (!r.stdout_text.empty()) out += "stdout:\n" + r.stdout_text;
  if (!r.stderr_text.empty()) {
    if (!out.empty() && out.back() != '\n') out += '\n';
    out += "stderr:\n" + r.stderr_text;
  }
  if (!out.empty() && out.back() != '\n') out += '\n';
  if (r.timed_out) {
    out += "[execution timed out and was killed]";
  } else {
    if (r.stdout_text.empty()) out += "[no output printed; use print() to show results]\n";
    out += "[exit status " + std::to_string(r.exit_status) + "]";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Schema checking

std::vector<std::string> check_schema(const json& schema, const json& value, const std::string& path) {
  std::vector<std::string> problems;
  const auto type = schema.value("type", std::string{});
  const auto type_ok = [&]() {
    if (type.empty()) return true;
    if (type == "object") return value.is_object();
    if (type == "array") return value.is_array();
    if (type == "string") return value.is_string();
    if (type == "integer") return value.is_number_integer();
    if (type == "number") return value.is_number();
    if (type == "boolean") return value.is_boolean();
    return false;
  };
  if (!type_ok()) {
    problems.push_back(path + ": expected " + type);
    return problems;
  }
  if (value.is_object()) {
    const auto props = schema.value("properties", json::object());
    for (const auto& req : schema.value("required", json::array())) {
      if (!value.contains(req.get<std::string>())) problems.push_back(path + ": missing required \"" + req.get<std::string>() + "\"");
    }
    for (const auto& [key, sub] : value.items()) {
      if (props.contains(key)) {
        auto nested = check_schema(props[key], sub, path + "." + key);
        problems.insert(problems.end(), nested.begin(), nested.end());
      } else if (schema.value("additionalProperties", true) == false) {
        problems.push_back(path + ": unexpected property \"" + key + "\"");
      }
    }
  }
  if (value.is_array()) {
    if (schema.contains("minItems") && value.size() < schema["minItems"].get<std::size_t>()) {
      problems.push_back(path + ": needs at least " + schema["minItems"].dump() + " item(s)");
    }
    if (schema.contains("maxItems") && value.size() > schema["maxItems"].get<std::size_t>()) {
      problems.push_back(path + ": allows at most " + schema["maxItems"].dump() + " item(s)");
    }
    if (schema.contains("items")) {
      for (std::size_t i = 0; i < value.size(); ++i) {
        auto nested = check_schema(schema["items"], value[i], path + "[" + std::to_string(i) + "]");
        problems.insert(problems.end(), nested.begin(), nested.end());
      }
    }
  }
  if (value.is_string() && schema.contains("minLength") &&
      trim(value.get<std::string>()).size() < schema["minLength"].get<std::size_t>()) {
    problems.push_back(path + ": must not be empty");
  }
  return problems;
}

// ---------------------------------------------------------------------------
// Specs and built-in tools

namespace {

json string_list_schema(std::size_t cap) {
  return json{{"type", "array"}, {"items", {{"type", "string"}, {"minLength", 1}}}, {"minItems", 1}, {"maxItems", cap}};
}

json object_schema(json properties, json required) {
  return json{{"type", "object"},
              {"properties", std::move(properties)},
              {"required", std::move(required)},
              {"additionalProperties", false}};
}

}  // namespace

ToolSpec search_spec(std::size_t batch_cap) {
  return {"search",
          "Web search. Accepts several queries at once and returns the top 10 results (title, snippet, URL) for each.",
          object_schema({{"queries", string_list_schema(batch_cap)}}, {"queries"})};
}

ToolSpec scholar_spec(std::size_t batch_cap) {
  return {"scholar",
          "Academic literature search. Accepts several queries at once and returns the top 10 papers for each with "
          "authors, venue and citation count.",
          object_schema({{"queries", string_list_schema(batch_cap)}}, {"queries"})};
}

ToolSpec visit_spec(std::size_t batch_cap) {
  return {"visit",
          "Reads web pages and returns a summary of each page focused on the given goal.",
          object_schema({{"urls", string_list_schema(batch_cap)}, {"goal", {{"type", "string"}, {"minLength", 1}}}},
                        {"urls", "goal"})};
}

ToolSpec code_spec() {
  return {"code",
          "Runs Python code in a sandbox without network access. Only printed output is returned, so print every "
          "result you need.",
          object_schema({{"code", {{"type", "string"}, {"minLength", 1}}}}, {"code"})};
}

namespace {

class SearchTool final : public Tool {
 public:
  SearchTool(std::shared_ptr<Transport> transport, const ToolsConfig& c)
      : transport_(std::move(transport)), spec_(search_spec(c.batch_cap)), cap_(c.batch_cap), timeout_(c.search_timeout) {}
  const ToolSpec& spec() const override { return spec_; }
  milliseconds default_timeout() const override { return timeout_; }
  std::string invoke(const json& args, milliseconds) override {
    return render_search_results(search(*transport_, args.at("queries").get<std::vector<std::string>>(), cap_));
  }

 private:
  std::shared_ptr<Transport> transport_;
  ToolSpec spec_;
  std::size_t cap_;
  milliseconds timeout_;
};

class ScholarTool final : public Tool {
 public:
  ScholarTool(std::shared_ptr<Transport> transport, const ToolsConfig& c)
      : transport_(std::move(transport)), spec_(scholar_spec(c.batch_cap)), cap_(c.batch_cap), timeout_(c.scholar_timeout) {}
  const ToolSpec& spec() const override { return spec_; }
  milliseconds default_timeout() const override { return timeout_; }
  std::string invoke(const json& args, milliseconds) override {
    return render_scholar_results(scholar(*transport_, args.at("queries").get<std::vector<std::string>>(), cap_));
  }

 private:
  std::shared_ptr<Transport> transport_;
  ToolSpec spec_;
  std::size_t cap_;
  milliseconds timeout_;
};

class VisitTool final : public Tool {
 public:
  VisitTool(std::shared_ptr<Transport> transport, std::shared_ptr<ChatBackend> summarizer, const ToolsConfig& c)
      : transport_(std::move(transport)),
        summarizer_(std::move(summarizer)),
        spec_(visit_spec(c.batch_cap)),
        page_cap_(c.page_char_cap),
        timeout_(c.visit_timeout) {}
  const ToolSpec& spec() const override { return spec_; }
  milliseconds default_timeout() const override { return timeout_; }
  std::string invoke(const json& args, milliseconds) override {
    return render_visit_entries(visit(*transport_, args.at("urls").get<std::vector<std::string>>(),
                                      args.at("goal").get<std::string>(), *summarizer_, page_cap_));
  }

 private:
  std::shared_ptr<Transport> transport_;
  std::shared_ptr<ChatBackend> summarizer_;
  ToolSpec spec_;
  std::size_t page_cap_;
  milliseconds timeout_;
};

class CodeTool final : public Tool {
 public:
  explicit CodeTool(const ToolsConfig& c)
      : spec_(code_spec()),
        limits_(c.sandbox),
        interpreter_(c.interpreter),
        timeout_(c.code_timeout),
        permits_(std::max(1, c.sandbox_permits)) {}
  const ToolSpec& spec() const override { return spec_; }
  milliseconds default_timeout() const override { return timeout_; }
  std::string invoke(const json& args, milliseconds deadline) override {
    auto limits = limits_;
    limits.wall_time = std::min(limits.wall_time, deadline);
    permits_.acquire();
    struct Release {
      std::counting_semaphore<>& s;
      ~Release() { s.release(); }
    } release{permits_};
    return render_code_result(run_code(args.at("code").get<std::string>(), limits, interpreter_));
  }

 private:
  ToolSpec spec_;
  SandboxLimits limits_;
  std::vector<std::string> interpreter_;
  milliseconds timeout_;
  std::counting_semaphore<> permits_;
};

}  // namespace

// ---------------------------------------------------------------------------
// Registry and dispatch

MillisClock steady_millis_clock() {
  return [] {
    return std::chrono::duration_cast<milliseconds>(std::chrono::steady_clock::now().time_since_epoch()).count();
  };
}

ToolRegistry::ToolRegistry(std::vector<std::shared_ptr<Tool>> tools, std::size_t content_cap, MillisClock clock)
    : content_cap_(content_cap), clock_(std::move(clock)) {
  for (auto& t : tools) {
    if (!t) throw Error(Errc::invalid_argument, "null tool");
    const auto name = t->spec().name;
    if (!tools_.emplace(name, std::move(t)).second) throw Error(Errc::invalid_argument, "duplicate tool '" + name + "'");
  }
  for (const auto& [name, tool] : tools_) specs_.push_back(tool->spec());
}

std::shared_ptr<Tool> ToolRegistry::find(std::string_view name) const {
  auto it = tools_.find(name);
  return it == tools_.end() ? nullptr : it->second;
}

milliseconds ToolRegistry::timeout_for(std::string_view name) const {
  auto tool = find(name);
  return tool ? tool->default_timeout() : milliseconds(30'000);
}

ToolResponse execute(const ToolCall& call, const ToolRegistry& registry, milliseconds deadline) {
  const auto started = registry.now_ms();
  ToolResponse resp{call.tool_name, ToolStatus::ok, {}, 0};
  const auto finish = [&](ToolStatus status, std::string content) {
    resp.status = status;
    resp.content = truncate_utf8(content, registry.content_cap(),
                                 "\n[truncated to " + std::to_string(registry.content_cap()) + " characters]");
    resp.latency_ms = std::max<std::int64_t>(0, registry.now_ms() - started);
    return resp;
  };

  auto tool = registry.find(call.tool_name);
  if (!tool) {
    std::string names;
    for (const auto& s : registry.specs()) names += (names.empty() ? "" : ", ") + s.name;
    spdlog::warn("unknown tool '{}'", call.tool_name);
    return finish(ToolStatus::error, "Error: unknown tool '" + call.tool_name + "'. Available tools: " + names + ".");
  }
  if (auto problems = check_schema(tool->spec().argument_schema, call.arguments); !problems.empty()) {
    std::string detail;
    for (const auto& p : problems) detail += "\n- " + p;
    spdlog::warn("schema violation for tool '{}'", call.tool_name);
    return finish(ToolStatus::error, "Error: invalid arguments for tool '" + call.tool_name + "':" + detail);
  }

  // The worker owns copies of everything it touches, so an abandoned call can finish safely.
  std::packaged_task<std::string()> task([tool, args = call.arguments, deadline] { return tool->invoke(args, deadline); });
  auto result = task.get_future();
  std::thread(std::move(task)).detach();
  if (result.wait_for(deadline) != std::future_status::ready) {
    return finish(ToolStatus::timeout, "Error: tool '" + call.tool_name + "' did not finish within " +
                                           std::to_string(deadline.count()) + " ms.");
  }
  try {
    return finish(ToolStatus::ok, result.get());
  } catch (const std::exception& e) {
    return finish(ToolStatus::error, std::string("Error: ") + e.what());
  }
}

ToolResponse execute(const ToolCall& call, const ToolRegistry& registry) {
  return execute(call, registry, registry.timeout_for(call.tool_name));
}

ToolRegistry make_default_registry(std::shared_ptr<Transport> transport, std::shared_ptr<ChatBackend> summarizer,
                                   const ToolsConfig& config, MillisClock clock) {
  std::vector<std::shared_ptr<Tool>> tools{
      std::make_shared<SearchTool>(transport, config),
      std::make_shared<ScholarTool>(transport, config),
      std::make_shared<VisitTool>(transport, std::move(summarizer), config),
      std::make_shared<CodeTool>(config),
  };
  return ToolRegistry(std::move(tools), config.content_cap, std::move(clock));
}

}  // namespace iterresearch
