#pragma once

#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "iterresearch/core.hpp"

namespace iterresearch {

enum class Role { system, user, assistant };

struct PromptMessage {
  Role role;
  std::string content;

  bool operator==(const PromptMessage&) const = default;
};

using PromptMessages = std::vector<PromptMessage>;

std::string_view to_string(Role r);
json messages_to_json(const PromptMessages& messages);

/// Sum of message content sizes in bytes.
std::int64_t prompt_chars(const PromptMessages& messages);
/// FNV-1a over roles and contents; equal prompts have equal fingerprints.
std::string prompt_fingerprint(const PromptMessages& messages);

struct ToolSpec {
  std::string name;
  std::string description;
  json argument_schema = json::object();
};

// ---------------------------------------------------------------------------
// Rendering

/// System message with the output contract and tool specs, then one user message holding the
/// question, the previous report and the previous action with its tool response. Think text from
/// earlier rounds never appears. Throws Error(invalid_workspace).
PromptMessages render_workspace(const Workspace& ws, const std::vector<ToolSpec>& tools);

/// Same workspace content under an answer-only system message.
PromptMessages render_forced_final(const Workspace& ws);

/// One prior turn of a mono-context run: the raw reply and the observation it triggered.
struct MonoTurn {
  std::string raw_reply;
  std::optional<ToolResponse> tool_response;
};

/// Mono-context prompt: system, question, then every earlier raw reply and tool response verbatim.
PromptMessages render_mono(const Question& question, const std::vector<ToolSpec>& tools,
                           const std::vector<MonoTurn>& history, bool forced_final = false);

/// Appends the rejected reply and a repair instruction naming the parse error.
PromptMessages with_repair(PromptMessages base, std::string_view bad_reply, std::string_view error_text);

/// Text block a tool response contributes to a prompt.
std::string render_tool_response(const ToolResponse& r);
/// Canonical `<tool_call>` / `<answer>` text for an action.
std::string render_action(const Action& a);

// ---------------------------------------------------------------------------
// Parsing

enum class ParseErrorKind { missing_section, ambiguous_action, malformed_tool_json, empty_report, unknown_tag };

std::string_view to_string(ParseErrorKind k);

struct ParseError {
  ParseErrorKind kind;
  std::string detail;
  std::string raw_text;

  std::string describe() const;
};

using ParseResult = std::variant<RoundResponse, ParseError>;

/// Parses `<think>`, `<report>` and exactly one of `<tool_call>` / `<answer>`. Section bodies are
/// verbatim up to the matching close tag. Free text outside sections is ignored. Never throws.
ParseResult parse_round_response(std::string_view raw);

/// Inverse of parse_round_response. Throws Error(invalid_argument) if a section body contains
/// its own closing tag and therefore cannot be represented.
std::string emit_round_response(const RoundResponse& r);

}  // namespace iterresearch
