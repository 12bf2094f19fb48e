#include "iterresearch/protocol.hpp"

#include <algorithm>
#include <array>
#include <cctype>

#include "iterresearch/prompt_templates.hpp"

namespace iterresearch {

std::string_view to_string(Role r) {
  switch (r) {
    case Role::system: return "system";
    case Role::user: return "user";
    case Role::assistant: return "assistant";
  }
  return "user";
}

json messages_to_json(const PromptMessages& messages) {
  json arr = json::array();
  for (const auto& m : messages) arr.push_back({{"role", std::string(to_string(m.role))}, {"content", m.content}});
  return arr;
}

std::int64_t prompt_chars(const PromptMessages& messages) {
  std::int64_t n = 0;
  for (const auto& m : messages) n += static_cast<std::int64_t>(m.content.size());
  return n;
}

std::string prompt_fingerprint(const PromptMessages& messages) {
  std::uint64_t h = fnv1a64("");
  for (const auto& m : messages) {
    h = fnv1a64(to_string(m.role), h);
    h = fnv1a64(std::string_view("\0", 1), h);
    h = fnv1a64(m.content, h);
    h = fnv1a64(std::string_view("\0", 1), h);
  }
  return hex64(h);
}

namespace {

std::string replace_all(std::string_view text, std::string_view key, std::string_view value) {
  std::string out;
  std::size_t pos = 0;
  while (true) {
    auto hit = text.find(key, pos);
    if (hit == std::string_view::npos) break;
    out.append(text.substr(pos, hit - pos));
    out.append(value);
    pos = hit + key.size();
  }
  out.append(text.substr(pos));
  return out;
}

std::string tool_lines(const std::vector<ToolSpec>& tools) {
  std::string out;
  for (const auto& t : tools) {
    if (!out.empty()) out += '\n';
    out += dump_json(json{{"name", t.name}, {"description", t.description}, {"parameters", t.argument_schema}});
  }
  return out;
}

std::string question_section(const Question& q) { return "## Question\n" + q.text; }

std::string workspace_user_content(const Workspace& ws) {
  std::string out = question_section(ws.question);
  if (ws.round_index > 1) {
    out += "\n\n## Report from the previous round\n";
    out += ws.prev_report;
    out += "\n\n## Last action\n";
    out += render_action(*ws.prev_action);
    if (ws.prev_tool_response) {
      out += "\n\n## Tool response\n";
      out += render_tool_response(*ws.prev_tool_response);
    }
  }
  return out;
}

void require_valid(const Workspace& ws) {
  auto violations = validate_workspace(ws);
  if (violations.empty()) return;
  std::string detail;
  for (const auto& v : violations) {
    if (!detail.empty()) detail += "; ";
    detail += v.field + " " + v.rule;
  }
  throw Error(Errc::invalid_workspace, detail);
}

}  // namespace

std::string render_tool_response(const ToolResponse& r) {
  return "<tool_response tool=\"" + r.tool_name + "\" status=\"" + std::string(to_string(r.status)) + "\">\n" +
         r.content + "\n</tool_response>";
}

std::string render_action(const Action& a) {
  if (const auto* call = std::get_if<ToolCall>(&a)) {
    return "<tool_call>\n" + dump_json(json{{"name", call->tool_name}, {"arguments", call->arguments}}) +
           "\n</tool_call>";
  }
  return "<answer>" + std::get<FinalAnswer>(a).text + "</answer>";
}

PromptMessages render_workspace(const Workspace& ws, const std::vector<ToolSpec>& tools) {
  require_valid(ws);
  return {
      {Role::system, replace_all(prompts::system, "{{tools}}", tool_lines(tools))},
      {Role::user, workspace_user_content(ws)},
  };
}

PromptMessages render_forced_final(const Workspace& ws) {
  require_valid(ws);
  return {
      {Role::system, std::string(prompts::forced_final)},
      {Role::user, workspace_user_content(ws)},
  };
}

PromptMessages render_mono(const Question& question, const std::vector<ToolSpec>& tools,
                           const std::vector<MonoTurn>& history, bool forced_final) {
  if (trim(question.text).empty()) throw Error(Errc::invalid_workspace, "question text is empty");
  PromptMessages out;
  if (forced_final) {
    out.push_back({Role::system, std::string(prompts::forced_final)});
  } else {
    out.push_back({Role::system, replace_all(prompts::mono_system, "{{tools}}", tool_lines(tools))});
  }
  out.push_back({Role::user, question_section(question)});
  for (const auto& turn : history) {
    out.push_back({Role::assistant, turn.raw_reply});
    if (turn.tool_response) out.push_back({Role::user, render_tool_response(*turn.tool_response)});
  }
  return out;
}

PromptMessages with_repair(PromptMessages base, std::string_view bad_reply, std::string_view error_text) {
  base.push_back({Role::assistant, std::string(bad_reply)});
  base.push_back({Role::user, replace_all(prompts::repair, "{{error}}", error_text)});
  return base;
}

// ---------------------------------------------------------------------------
// Parsing

std::string_view to_string(ParseErrorKind k) {
  switch (k) {
    case ParseErrorKind::missing_section: return "missing_section";
    case ParseErrorKind::ambiguous_action: return "ambiguous_action";
    case ParseErrorKind::malformed_tool_json: return "malformed_tool_json";
    case ParseErrorKind::empty_report: return "empty_report";
    case ParseErrorKind::unknown_tag: return "unknown_tag";
  }
  return "missing_section";
}

std::string ParseError::describe() const { return std::string(to_string(kind)) + ": " + detail; }

namespace {

constexpr std::array<std::string_view, 4> kSections = {"think", "report", "tool_call", "answer"};
constexpr int kMaxJsonDepth = 64;

struct Tag {
  std::string_view name;
  bool closing = false;
  bool self_closing = false;
  std::size_t begin = 0;  // position of '<'
  std::size_t end = 0;    // one past '>'
};

bool is_name_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0 || c == '_'; }
bool is_name_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_' || c == '-' || c == ':' || c == '.';
}

// Reads a tag at raw[lt] == '<'. Attributes are skipped; a tag may not contain '<' or a newline.
std::optional<Tag> read_tag(std::string_view raw, std::size_t lt) {
  Tag t;
  t.begin = lt;
  std::size_t i = lt + 1;
  if (i < raw.size() && raw[i] == '/') {
    t.closing = true;
    ++i;
  }
  if (i >= raw.size() || !is_name_start(raw[i])) return std::nullopt;
  const std::size_t name_begin = i;
  while (i < raw.size() && is_name_char(raw[i])) ++i;
  t.name = raw.substr(name_begin, i - name_begin);
  while (i < raw.size() && raw[i] != '>') {
    if (raw[i] == '<' || raw[i] == '\n') return std::nullopt;
    ++i;
  }
  if (i >= raw.size()) return std::nullopt;
  t.self_closing = !t.closing && raw[i - 1] == '/';
  t.end = i + 1;
  return t;
}

bool is_section(std::string_view name) {
  return std::find(kSections.begin(), kSections.end(), name) != kSections.end();
}

struct Section {
  std::string_view name;
  std::string_view body;
};

bool json_depth_ok(std::string_view text) {
  int depth = 0;
  bool in_string = false, escaped = false;
  for (char c : text) {
    if (in_string) {
      if (escaped) {
        escaped = false;
      } else if (c == '\\') {
        escaped = true;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '{' || c == '[') {
      if (++depth > kMaxJsonDepth) return false;
    } else if (c == '}' || c == ']') {
      --depth;
    }
  }
  return true;
}

}  // namespace

ParseResult parse_round_response(std::string_view raw) {
  const auto fail = [&](ParseErrorKind kind, std::string detail) -> ParseResult {
    return ParseError{kind, std::move(detail), std::string(raw)};
  };

  std::vector<Section> sections;
  std::vector<std::size_t> section_starts;
  struct OpenUnknown {
    std::string_view name;
    std::size_t pos;
  };
  std::vector<OpenUnknown> open_unknown;

  std::size_t pos = 0;
  while (pos < raw.size()) {
    const auto lt = raw.find('<', pos);
    if (lt == std::string_view::npos) break;
    auto tag = read_tag(raw, lt);
    if (!tag) {
      pos = lt + 1;
      continue;
    }
    if (is_section(tag->name)) {
      if (tag->closing) {
        return fail(ParseErrorKind::missing_section, "</" + std::string(tag->name) + "> without an opening tag");
      }
      const std::string close = "</" + std::string(tag->name) + ">";
      const auto close_pos = raw.find(close, tag->end);
      if (close_pos == std::string_view::npos) {
        return fail(ParseErrorKind::missing_section, "<" + std::string(tag->name) + "> is never closed");
      }
      sections.push_back({tag->name, raw.substr(tag->end, close_pos - tag->end)});
      section_starts.push_back(lt);
      pos = close_pos + close.size();
      continue;
    }
    if (tag->closing) {
      auto it = std::find_if(open_unknown.rbegin(), open_unknown.rend(),
                             [&](const OpenUnknown& o) { return o.name == tag->name; });
      if (it != open_unknown.rend()) {
        const auto opened_at = it->pos;
        const bool spans_section = std::any_of(section_starts.begin(), section_starts.end(),
                                               [&](std::size_t s) { return s > opened_at && s < lt; });
        if (spans_section) {
          return fail(ParseErrorKind::unknown_tag,
                      "unrecognized tag <" + std::string(tag->name) + "> interleaves the response sections");
        }
        open_unknown.erase(std::next(it).base());
      }
    } else if (!tag->self_closing) {
      open_unknown.push_back({tag->name, lt});
    }
    pos = tag->end;
  }

  const auto count = [&](std::string_view name) {
    return std::count_if(sections.begin(), sections.end(), [&](const Section& s) { return s.name == name; });
  };
  const auto body = [&](std::string_view name) {
    return std::find_if(sections.begin(), sections.end(), [&](const Section& s) { return s.name == name; })->body;
  };

  for (std::string_view required : {std::string_view("think"), std::string_view("report")}) {
    const auto n = count(required);
    if (n == 0) return fail(ParseErrorKind::missing_section, "missing <" + std::string(required) + "> section");
    if (n > 1) {
      return fail(ParseErrorKind::missing_section,
                  "<" + std::string(required) + "> appears " + std::to_string(n) + " times; exactly one required");
    }
  }
  const auto calls = count("tool_call");
  const auto answers = count("answer");
  if (calls + answers == 0) {
    return fail(ParseErrorKind::missing_section, "missing action: expected <tool_call> or <answer>");
  }
  if (calls + answers > 1) {
    return fail(ParseErrorKind::ambiguous_action, std::to_string(calls) + " tool call(s) and " +
                                                      std::to_string(answers) + " answer(s); exactly one action allowed");
  }

  RoundResponse out;
  out.think = std::string(body("think"));
  out.report = std::string(body("report"));
  if (trim(out.report).empty()) return fail(ParseErrorKind::empty_report, "<report> is empty");

  if (answers == 1) {
    auto text = body("answer");
    if (trim(text).empty()) return fail(ParseErrorKind::missing_section, "<answer> is empty");
    out.action = FinalAnswer{std::string(text)};
    return out;
  }

  const auto text = body("tool_call");
  if (!json_depth_ok(text)) return fail(ParseErrorKind::malformed_tool_json, "tool call JSON nests too deeply");
  auto doc = json::parse(text.begin(), text.end(), nullptr, /*allow_exceptions=*/false);
  if (doc.is_discarded()) return fail(ParseErrorKind::malformed_tool_json, "tool call body is not valid JSON");
  if (!doc.is_object()) return fail(ParseErrorKind::malformed_tool_json, "tool call body must be a JSON object");
  auto name = doc.find("name");
  if (name == doc.end() || !name->is_string() || name->get<std::string>().empty()) {
    return fail(ParseErrorKind::malformed_tool_json, "tool call needs a non-empty string \"name\"");
  }
  ToolCall call{name->get<std::string>(), json::object()};
  if (auto args = doc.find("arguments"); args != doc.end()) {
    if (!args->is_object()) return fail(ParseErrorKind::malformed_tool_json, "\"arguments\" must be a JSON object");
    call.arguments = *args;
  }
  out.action = std::move(call);
  return out;
}

std::string emit_round_response(const RoundResponse& r) {
  const auto guard = [](std::string_view text, std::string_view tag) {
    if (text.find("</" + std::string(tag) + ">") != std::string_view::npos) {
      throw Error(Errc::invalid_argument, "section <" + std::string(tag) + "> contains its own closing tag");
    }
  };
  guard(r.think, "think");
  guard(r.report, "report");
  if (const auto* a = std::get_if<FinalAnswer>(&r.action)) guard(a->text, "answer");
  if (const auto* call = std::get_if<ToolCall>(&r.action)) {
    guard(dump_json(call->arguments) + call->tool_name, "tool_call");
  }
  auto action = render_action(r.action);
  return "<think>" + r.think + "</think>\n<report>" + r.report + "</report>\n" + action;
}

}  // namespace iterresearch
