#include "relforge/llm_client.hpp"

#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <fstream>
#include <mutex>

#include "httplib.h"
#include "json.hpp"
#include "relforge/errors.hpp"

namespace relforge {

namespace {

struct ParsedUrl {
  std::string base;  // scheme://host[:port]
  std::string path;
};

ParsedUrl split_url(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos)
    throw ConfigError("endpoint must start with http:// or https://: " + url);
  auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

long now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

class HttpChatClient final : public ChatClient {
 public:
  explicit HttpChatClient(HttpClientConfig config)
      : config_(std::move(config)), slots_(config_.max_concurrent) {
    if (config_.endpoint.empty()) throw ConfigError("LLM endpoint not configured");
    if (config_.max_concurrent < 1)
      throw ConfigError("max_concurrent must be at least 1");
    split_url(config_.endpoint);  // validate eagerly
  }

  ChatResult complete(const ChatRequest& request) override {
    Slot slot(*this);
    auto url = split_url(config_.endpoint);
    nlohmann::ordered_json body;
    body["model"] = request.model.empty() ? config_.model : request.model;
    body["messages"] = nlohmann::ordered_json::array();
    if (!request.system_text.empty())
      body["messages"].push_back({{"role", "system"}, {"content", request.system_text}});
    body["messages"].push_back({{"role", "user"}, {"content", request.user_text}});
    body["temperature"] = request.temperature;
    body["max_tokens"] = request.max_tokens;
    const std::string payload = body.dump();

    std::string last_error;
    long start = now_ms();
    for (int attempt = 1; attempt <= config_.transport_retries + 1; ++attempt) {
      httplib::Client client(url.base);
      client.set_connection_timeout(config_.timeout_sec);
      client.set_read_timeout(config_.timeout_sec);
      httplib::Headers headers;
      if (!config_.api_key.empty())
        headers.emplace("Authorization", "Bearer " + config_.api_key);
      auto res = client.Post(url.path, headers, payload, "application/json");
      if (!res) {
        last_error = "transport failure: " + httplib::to_string(res.error());
        audit(request, attempt, now_ms() - start, 0, false);
        continue;
      }
      if (res->status >= 400 && res->status < 500) {
        audit(request, attempt, now_ms() - start, res->status, false);
        throw ClientError("chat endpoint rejected the request: " + res->body,
                          res->status);
      }
      if (res->status < 200 || res->status >= 300) {
        last_error = "status " + std::to_string(res->status);
        audit(request, attempt, now_ms() - start, res->status, false);
        continue;
      }
      try {
        auto parsed = nlohmann::json::parse(res->body);
        ChatResult result;
        result.text =
            parsed.at("choices").at(0).at("message").at("content").get<std::string>();
        result.attempts = attempt;
        result.latency_ms = now_ms() - start;
        audit(request, attempt, result.latency_ms, res->status, true);
        return result;
      } catch (const nlohmann::json::exception& e) {
        last_error = std::string("malformed response: ") + e.what();
        audit(request, attempt, now_ms() - start, res->status, false);
      }
    }
    throw ClientError("chat completion failed after " +
                          std::to_string(config_.transport_retries + 1) +
                          " attempts: " + last_error,
                      0);
  }

 private:
  // RAII slot in the bounded in-flight window.
  struct Slot {
    explicit Slot(HttpChatClient& owner) : owner_(owner) {
      std::unique_lock lock(owner_.mutex_);
      owner_.slot_free_.wait(lock, [&] { return owner_.slots_ > 0; });
      --owner_.slots_;
    }
    ~Slot() {
      {
        std::lock_guard lock(owner_.mutex_);
        ++owner_.slots_;
      }
      owner_.slot_free_.notify_one();
    }
    HttpChatClient& owner_;
  };

  void audit(const ChatRequest& request, int attempt, long latency_ms, int status,
             bool ok) {
    if (config_.audit_path.empty()) return;
    nlohmann::ordered_json line;
    line["time_ms"] = now_ms();
    line["model"] = request.model.empty() ? config_.model : request.model;
    line["attempt"] = attempt;
    line["latency_ms"] = latency_ms;
    line["status"] = status;
    line["ok"] = ok;
    line["request_chars"] =
        request.system_text.size() + request.user_text.size();
    std::lock_guard lock(audit_mutex_);
    std::ofstream out(config_.audit_path, std::ios::app | std::ios::binary);
    if (out) out << line.dump() << "\n";
  }

  HttpClientConfig config_;
  std::mutex mutex_;
  std::condition_variable slot_free_;
  int slots_;
  std::mutex audit_mutex_;
};

}  // namespace

HttpClientConfig http_config_from_env() {
  HttpClientConfig config;
  const char* endpoint = std::getenv("RELFORGE_LLM_ENDPOINT");
  if (!endpoint || !*endpoint)
    throw ConfigError("RELFORGE_LLM_ENDPOINT is not set (use --offline to skip the LLM)");
  config.endpoint = endpoint;
  if (const char* key = std::getenv("RELFORGE_LLM_KEY")) config.api_key = key;
  return config;
}

std::unique_ptr<ChatClient> make_http_client(const HttpClientConfig& config) {
  return std::make_unique<HttpChatClient>(config);
}

}  // namespace relforge
