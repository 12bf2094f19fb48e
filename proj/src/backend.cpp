#include "iterresearch/backend.hpp"

#include <cstdlib>
#include <thread>

#include <spdlog/spdlog.h>

#include "http_client.hpp"

namespace iterresearch {

using std::chrono::milliseconds;

std::string ScriptedBackend::complete(const PromptMessages& messages, const SamplingParams&) {
  std::lock_guard lock(mu_);
  seen_.push_back(messages);
  if (cursor_ >= replies_.size()) {
    throw Error(Errc::script_exhausted, "scripted backend has no reply left after " + std::to_string(cursor_) + " call(s)");
  }
  return replies_[cursor_++];
}

std::size_t ScriptedBackend::cursor() const {
  std::lock_guard lock(mu_);
  return cursor_;
}

std::size_t ScriptedBackend::remaining() const {
  std::lock_guard lock(mu_);
  return replies_.size() - cursor_;
}

std::vector<PromptMessages> ScriptedBackend::seen() const {
  std::lock_guard lock(mu_);
  return seen_;
}

void validate_backend_config(const BackendConfig& c) {
  if (c.max_retries < 0 || c.max_retries > 5) throw Error(Errc::invalid_argument, "max_retries must lie in [0, 5]");
  if (c.request_timeout.count() <= 0) throw Error(Errc::invalid_argument, "request_timeout must be positive");
  if (c.initial_backoff.count() < 0) throw Error(Errc::invalid_argument, "initial_backoff must be >= 0");
  if (c.endpoint_url.find("://") == std::string::npos) {
    throw Error(Errc::invalid_argument, "endpoint_url must be an absolute URL");
  }
}

void to_json(json& j, const BackendConfig& c) {
  j = json{{"endpoint_url", c.endpoint_url},
           {"model_name", c.model_name},
           {"api_key_env", c.api_key_env},
           {"request_timeout_ms", c.request_timeout.count()},
           {"max_retries", c.max_retries},
           {"initial_backoff_ms", c.initial_backoff.count()}};
}

void from_json(const json& j, BackendConfig& c) {
  const BackendConfig d;
  c.endpoint_url = j.value("endpoint_url", d.endpoint_url);
  c.model_name = j.value("model_name", d.model_name);
  c.api_key_env = j.value("api_key_env", d.api_key_env);
  c.request_timeout = milliseconds(j.value("request_timeout_ms", d.request_timeout.count()));
  c.max_retries = j.value("max_retries", d.max_retries);
  c.initial_backoff = milliseconds(j.value("initial_backoff_ms", d.initial_backoff.count()));
}

json chat_request_body(const BackendConfig& config, const PromptMessages& messages, const SamplingParams& sampling) {
  return json{{"model", config.model_name},
              {"messages", messages_to_json(messages)},
              {"temperature", sampling.temperature},
              {"top_p", sampling.top_p},
              {"seed", sampling.seed},
              {"stream", false}};
}

std::string chat_response_text(const json& body) {
  const auto* content = [&]() -> const json* {
    if (!body.is_object() || !body.contains("choices") || !body["choices"].is_array() || body["choices"].empty()) {
      return nullptr;
    }
    const auto& choice = body["choices"][0];
    if (!choice.contains("message") || !choice["message"].contains("content")) return nullptr;
    return &choice["message"]["content"];
  }();
  if (!content || !content->is_string()) {
    throw Error(Errc::backend_refused, "response lacks choices[0].message.content");
  }
  return content->get<std::string>();
}

HttpChatBackend::HttpChatBackend(BackendConfig config) : config_(std::move(config)) {
  validate_backend_config(config_);
  std::tie(origin_, path_) = detail::split_url(config_.endpoint_url);
  if (const char* key = config_.api_key_env.empty() ? nullptr : std::getenv(config_.api_key_env.c_str())) {
    api_key_ = key;
  }
}

std::string HttpChatBackend::complete(const PromptMessages& messages, const SamplingParams& sampling) {
  validate_sampling(sampling);
  const auto body = dump_json(chat_request_body(config_, messages, sampling));
  detail::Headers headers;
  if (!api_key_.empty()) headers.emplace_back("Authorization", "Bearer " + api_key_);

  std::string last_error;
  auto backoff = config_.initial_backoff;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
    detail::HttpReply reply;
    try {
      reply = detail::http_post(config_.endpoint_url, body, "application/json", headers, config_.request_timeout);
    } catch (const Error& e) {
      last_error = e.what();
      spdlog::warn("chat backend attempt {} failed: {}", attempt + 1, last_error);
      continue;
    }
    if (reply.status == 200) {
      auto parsed = json::parse(reply.body, nullptr, false);
      if (parsed.is_discarded()) throw Error(Errc::backend_refused, "response body is not JSON");
      return chat_response_text(parsed);
    }
    const bool retryable = reply.status >= 500 || reply.status == 408 || reply.status == 429;
    last_error = "HTTP " + std::to_string(reply.status) + ": " + reply.body.substr(0, 200);
    if (!retryable) throw Error(Errc::backend_refused, last_error);
    spdlog::warn("chat backend attempt {} got {}", attempt + 1, last_error);
  }
  throw Error(Errc::backend_exhausted,
              "gave up after " + std::to_string(config_.max_retries + 1) + " attempt(s); last error: " + last_error);
}

}  // namespace iterresearch
