#pragma once

#include <memory>
#include <string>

namespace relforge {

struct ChatRequest {
  std::string model;
  std::string system_text;
  std::string user_text;
  double temperature = 0.2;
  int max_tokens = 512;
};

struct ChatResult {
  std::string text;
  int attempts = 1;
  long latency_ms = 0;
};

// Blocking chat-completion client. Implementations must be safe to call from
// multiple threads.
class ChatClient {
 public:
  virtual ~ChatClient() = default;
  virtual ChatResult complete(const ChatRequest& request) = 0;
};

struct HttpClientConfig {
  std::string endpoint;  // full URL including path
  std::string api_key;
  std::string model = "gpt-4";
  int timeout_sec = 60;
  int max_concurrent = 8;   // in-flight request cap
  int transport_retries = 2;  // extra attempts on transport/5xx failures
  std::string audit_path;   // empty disables the audit log
};

// Reads RELFORGE_LLM_ENDPOINT / RELFORGE_LLM_KEY. Throws ConfigError when the
// endpoint is unset.
HttpClientConfig http_config_from_env();

// POSTs {model, messages, temperature, max_tokens} and returns
// choices[0].message.content. Retries transport failures and 5xx responses;
// 4xx responses fail immediately. Throws ClientError.
std::unique_ptr<ChatClient> make_http_client(const HttpClientConfig& config);

}  // namespace relforge
