#include "taintlens/llm.hpp"

#include <httplib.h>

#include <cstdlib>
#include <thread>

namespace taintlens {

using json = nlohmann::json;

void check_config(const LlmConfig &cfg) {
  if (cfg.temperature < 0)
    throw std::invalid_argument("temperature must be >= 0");
  if (cfg.max_tokens <= 0)
    throw std::invalid_argument("max_tokens must be > 0");
  if (!(cfg.top_p > 0 && cfg.top_p <= 1))
    throw std::invalid_argument("top_p must be in (0, 1]");
  if (cfg.retries < 0 || cfg.backoff_ms < 0)
    throw std::invalid_argument("retries and backoff_ms must be >= 0");
}

std::string_view to_string(ChatRole role) {
  switch (role) {
  case ChatRole::System:
    return "system";
  case ChatRole::User:
    return "user";
  case ChatRole::Assistant:
    return "assistant";
  }
  return "user";
}

json chat_payload(const LlmConfig &cfg,
                  const std::vector<ChatMessage> &messages) {
  json msgs = json::array();
  for (const auto &m : messages)
    msgs.push_back({{"role", to_string(m.role)}, {"content", m.content}});
  json p = {{"model", cfg.model_id},
            {"messages", std::move(msgs)},
            {"temperature", cfg.temperature},
            {"max_tokens", cfg.max_tokens},
            {"top_p", cfg.top_p}};
  if (cfg.seed)
    p["seed"] = *cfg.seed;
  return p;
}

std::string completion_body(const std::string &content) {
  json body = {
      {"choices",
       json::array({{{"index", 0},
                     {"message", {{"role", "assistant"}, {"content", content}}},
                     {"finish_reason", "stop"}}})}};
  return body.dump();
}

std::string payload_user_text(const json &payload) {
  std::string out;
  for (const auto &m : payload.value("messages", json::array()))
    if (m.value("role", "") == "user") {
      if (!out.empty())
        out += '\n';
      out += m.value("content", "");
    }
  return out;
}

namespace {

class HttpTransport : public ChatTransport {
public:
  HttpTransport(const std::string &base_url, std::string key)
      : key_(std::move(key)) {
    auto scheme = base_url.find("://");
    auto slash = base_url.find('/', scheme == std::string::npos ? 0 : scheme + 3);
    if (slash == std::string::npos) {
      host_ = base_url;
    } else {
      host_ = base_url.substr(0, slash);
      prefix_ = base_url.substr(slash);
    }
    while (!prefix_.empty() && prefix_.back() == '/')
      prefix_.pop_back();
  }

  TransportResponse post(const json &payload) override {
    httplib::Client cli(host_);
    cli.set_connection_timeout(30);
    cli.set_read_timeout(300);
    httplib::Headers headers = {{"Authorization", "Bearer " + key_}};
    auto res = cli.Post(prefix_ + "/chat/completions", headers, payload.dump(),
                        "application/json");
    if (!res)
      return {0, "", httplib::to_string(res.error())};
    return {res->status, res->body, ""};
  }

private:
  std::string host_;
  std::string prefix_;
  std::string key_;
};

} // namespace

std::shared_ptr<ChatTransport> make_http_transport(const LlmConfig &cfg) {
  const char *key = std::getenv(cfg.api_key_env.c_str());
  if (!key || !*key)
    throw AuthError("environment variable " + cfg.api_key_env + " is not set");
  return std::make_shared<HttpTransport>(cfg.base_url, key);
}

TransportResponse FunctionTransport::post(const json &payload) {
  return {200, completion_body(fn_(payload_user_text(payload))), ""};
}

TransportResponse RecordingTransport::post(const json &payload) {
  {
    std::lock_guard lock(mu_);
    payloads_.push_back(payload);
  }
  return inner_->post(payload);
}

std::vector<json> RecordingTransport::payloads() const {
  std::lock_guard lock(mu_);
  return payloads_;
}

ChatClient::ChatClient(LlmConfig cfg, std::shared_ptr<ChatTransport> transport,
                       Sleeper sleeper)
    : cfg_(std::move(cfg)), transport_(std::move(transport)),
      sleeper_(std::move(sleeper)) {
  check_config(cfg_);
  if (!sleeper_)
    sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

std::string ChatClient::chat(const std::vector<ChatMessage> &messages) {
  auto payload = chat_payload(cfg_, messages);
  std::string last;
  for (int attempt = 0; attempt <= cfg_.retries; ++attempt) {
    if (attempt > 0)
      sleeper_(std::chrono::milliseconds(
          static_cast<long long>(cfg_.backoff_ms) << (attempt - 1)));
    auto res = transport_->post(payload);
    if (res.status == 401 || res.status == 403)
      throw AuthError("HTTP " + std::to_string(res.status) + ": " + res.body);
    if (res.status == 0) {
      last = res.error.empty() ? "connection failed" : res.error;
      continue;
    }
    if (res.status == 429 || res.status >= 500) {
      last = "HTTP " + std::to_string(res.status);
      continue;
    }
    if (res.status >= 400)
      throw NonRetryable4xx(res.status, res.body);
    auto body = json::parse(res.body, nullptr, false);
    if (body.is_discarded() || !body.contains("choices") ||
        !body["choices"].is_array() || body["choices"].empty()) {
      last = "malformed completion body";
      continue;
    }
    const auto &msg = body["choices"][0].value("message", json::object());
    auto content = msg.value("content", json());
    ++calls_;
    return content.is_string() ? content.get<std::string>() : std::string();
  }
  throw TransportError("chat request failed after " +
                       std::to_string(cfg_.retries + 1) + " attempts: " + last);
}

} // namespace taintlens
