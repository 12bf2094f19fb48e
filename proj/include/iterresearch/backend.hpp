#pragma once

#include <chrono>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "iterresearch/core.hpp"
#include "iterresearch/protocol.hpp"

namespace iterresearch {

/// Chat-completion policy. Implementations must be safe to call from the thread that owns them;
/// HttpChatBackend and FunctionBackend (given a thread-safe callable) may be shared across threads.
class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  /// Returns the assistant text of a single completion.
  virtual std::string complete(const PromptMessages& messages, const SamplingParams& sampling) = 0;
};

/// Replays a fixed list of replies in order; throws Error(script_exhausted) past the end.
class ScriptedBackend final : public ChatBackend {
 public:
  explicit ScriptedBackend(std::vector<std::string> replies) : replies_(std::move(replies)) {}

  std::string complete(const PromptMessages& messages, const SamplingParams& sampling) override;

  std::size_t cursor() const;
  std::size_t remaining() const;
  /// Prompts seen so far, in call order.
  std::vector<PromptMessages> seen() const;

 private:
  mutable std::mutex mu_;
  std::vector<std::string> replies_;
  std::size_t cursor_ = 0;
  std::vector<PromptMessages> seen_;
};

/// Adapts a callable; used for deterministic summarizers and judges in tests and offline runs.
class FunctionBackend final : public ChatBackend {
 public:
  using Fn = std::function<std::string(const PromptMessages&, const SamplingParams&)>;
  explicit FunctionBackend(Fn fn) : fn_(std::move(fn)) {}

  std::string complete(const PromptMessages& messages, const SamplingParams& sampling) override {
    return fn_(messages, sampling);
  }

 private:
  Fn fn_;
};

struct BackendConfig {
  std::string endpoint_url = "http://127.0.0.1:8000/v1/chat/completions";
  std::string model_name = "iterresearch";
  std::string api_key_env = "ITERRESEARCH_API_KEY";
  std::chrono::milliseconds request_timeout{120'000};
  int max_retries = 3;
  std::chrono::milliseconds initial_backoff{500};
};

void validate_backend_config(const BackendConfig& c);
void to_json(json& j, const BackendConfig& c);
void from_json(const json& j, BackendConfig& c);

/// Request body sent by HttpChatBackend; exposed so the wire format can be tested directly.
json chat_request_body(const BackendConfig& config, const PromptMessages& messages, const SamplingParams& sampling);
/// Extracts choices[0].message.content; throws Error(backend_refused) on an unexpected shape.
std::string chat_response_text(const json& body);

/// OpenAI-style chat-completion client. Transport failures, 408, 429 and 5xx are retried with
/// exponential backoff up to max_retries; other 4xx throw Error(backend_refused).
class HttpChatBackend final : public ChatBackend {
 public:
  explicit HttpChatBackend(BackendConfig config);

  std::string complete(const PromptMessages& messages, const SamplingParams& sampling) override;

  const BackendConfig& config() const { return config_; }

 private:
  BackendConfig config_;
  std::string origin_;  // scheme://host[:port]
  std::string path_;
  std::string api_key_;
};

}  // namespace iterresearch
