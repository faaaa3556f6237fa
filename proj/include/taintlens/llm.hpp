#pragma once

#include <nlohmann/json.hpp>

#include <atomic>
#include <chrono>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace taintlens {

struct LlmConfig {
  std::string base_url = "https://api.openai.com/v1";
  std::string model_id = "gpt-4";
  double temperature = 0.0;
  int max_tokens = 2048;
  double top_p = 1.0;
  std::optional<long long> seed;
  std::string api_key_env = "LLM_API_KEY";
  int retries = 3;
  int backoff_ms = 500;
};

/// Throws std::invalid_argument on out-of-range decoding parameters.
void check_config(const LlmConfig &cfg);

enum class ChatRole { System, User, Assistant };

struct ChatMessage {
  ChatRole role = ChatRole::User;
  std::string content;

  bool operator==(const ChatMessage &) const = default;
};

std::string_view to_string(ChatRole role);

class LlmError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};
class TransportError : public LlmError {
  using LlmError::LlmError;
};
class AuthError : public LlmError {
  using LlmError::LlmError;
};
class NonRetryable4xx : public LlmError {
public:
  NonRetryable4xx(int status, const std::string &body)
      : LlmError("HTTP " + std::to_string(status) + ": " + body),
        status_(status) {}
  int status() const { return status_; }

private:
  int status_;
};

/// Raw HTTP-level outcome. status 0 means the request never completed.
struct TransportResponse {
  int status = 0;
  std::string body;
  std::string error;
};

/// Sends one chat-completion payload. Implementations must be safe to call
/// from several threads.
class ChatTransport {
public:
  virtual ~ChatTransport() = default;
  virtual TransportResponse post(const nlohmann::json &payload) = 0;
};

/// The request body carried to POST {base_url}/chat/completions.
nlohmann::json chat_payload(const LlmConfig &cfg,
                            const std::vector<ChatMessage> &messages);
/// A minimal successful completion body wrapping `content`.
std::string completion_body(const std::string &content);
/// The user-role text of a payload, concatenated.
std::string payload_user_text(const nlohmann::json &payload);

/// OpenAI-compatible HTTP transport. Reads the key from cfg.api_key_env
/// and throws AuthError when it is unset.
std::shared_ptr<ChatTransport> make_http_transport(const LlmConfig &cfg);

/// Replies produced by a callback on the user text.
class FunctionTransport : public ChatTransport {
public:
  explicit FunctionTransport(std::function<std::string(const std::string &)> fn)
      : fn_(std::move(fn)) {}
  TransportResponse post(const nlohmann::json &payload) override;

private:
  std::function<std::string(const std::string &)> fn_;
};

/// Keeps every payload that passes through it.
class RecordingTransport : public ChatTransport {
public:
  explicit RecordingTransport(std::shared_ptr<ChatTransport> inner)
      : inner_(std::move(inner)) {}
  TransportResponse post(const nlohmann::json &payload) override;
  std::vector<nlohmann::json> payloads() const;

private:
  std::shared_ptr<ChatTransport> inner_;
  mutable std::mutex mu_;
  std::vector<nlohmann::json> payloads_;
};

using Sleeper = std::function<void(std::chrono::milliseconds)>;

class ChatClient {
public:
  ChatClient(LlmConfig cfg, std::shared_ptr<ChatTransport> transport,
             Sleeper sleeper = {});

  /// First choice's text. Retries transport failures, 429 and 5xx with
  /// exponential backoff.
  std::string chat(const std::vector<ChatMessage> &messages);

  const LlmConfig &config() const { return cfg_; }
  /// Successful chat() calls so far.
  int calls() const { return calls_.load(); }

private:
  LlmConfig cfg_;
  std::shared_ptr<ChatTransport> transport_;
  Sleeper sleeper_;
  std::atomic<int> calls_{0};
};

} // namespace taintlens
