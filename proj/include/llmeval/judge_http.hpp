#pragma once

// Chat-completion backend for live judging. Speaks the common
// {"model", "messages": [{"role": "user", ...}]} request shape and reads
// choices[0].message.content from the reply.

#include <cstdlib>
#include <string>
#include <utility>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "llmeval/error.hpp"
#include "llmeval/judge.hpp"

namespace llmeval::judge {

inline constexpr const char* kDefaultApiKeyEnv = "LLMEVAL_API_KEY";

struct HttpBackendConfig {
  std::string base_url;  // scheme://host[:port]
  std::string model;
  std::string path = "/v1/chat/completions";
  std::string api_key_env = kDefaultApiKeyEnv;
  nlohmann::json params = nlohmann::json::object();  // passed through verbatim (temperature, ...)
  int timeout_seconds = 120;

  bool configured() const { return !base_url.empty() && !model.empty(); }
};

inline void to_json(nlohmann::json& j, const HttpBackendConfig& c) {
  j = nlohmann::json{{"base_url", c.base_url}, {"model", c.model},      {"path", c.path},
                     {"api_key_env", c.api_key_env}, {"params", c.params}, {"timeout_seconds", c.timeout_seconds}};
}

inline void from_json(const nlohmann::json& j, HttpBackendConfig& c) {
  c.base_url = j.value("base_url", c.base_url);
  c.model = j.value("model", c.model);
  c.path = j.value("path", c.path);
  c.api_key_env = j.value("api_key_env", c.api_key_env);
  if (j.contains("params")) c.params = j.at("params");
  c.timeout_seconds = j.value("timeout_seconds", c.timeout_seconds);
}

class HttpChatBackend : public LlmClient {
 public:
  explicit HttpChatBackend(HttpBackendConfig cfg) : cfg_(std::move(cfg)) {
    if (!cfg_.configured()) {
      throw Error(Errc::BackendUnavailable, "HTTP judge backend needs base_url and model");
    }
  }

  std::string id() const override { return "http:" + cfg_.model; }

  // One client per call keeps concurrent runs independent.
  std::string complete(const std::string& prompt, const CallContext& /*ctx*/) override {
    httplib::Client client(cfg_.base_url);
    client.set_connection_timeout(cfg_.timeout_seconds, 0);
    client.set_read_timeout(cfg_.timeout_seconds, 0);

    httplib::Headers headers;
    if (const char* key = std::getenv(cfg_.api_key_env.c_str()); key != nullptr && *key != '\0') {
      headers.emplace("Authorization", std::string("Bearer ") + key);
    }

    nlohmann::json body = cfg_.params.is_object() ? cfg_.params : nlohmann::json::object();
    body["model"] = cfg_.model;
    body["messages"] = nlohmann::json::array({{{"role", "user"}, {"content", prompt}}});

    auto res = client.Post(cfg_.path, headers, body.dump(), "application/json");
    if (!res) {
      throw Error(Errc::BackendUnavailable, "judge backend request failed: " + httplib::to_string(res.error()));
    }
    if (res->status != 200) {
      throw Error(Errc::BackendUnavailable, "judge backend returned HTTP " + std::to_string(res->status));
    }
    try {
      auto reply = nlohmann::json::parse(res->body);
      return reply.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::BackendUnavailable, std::string("malformed chat-completion reply: ") + e.what());
    }
  }

 private:
  HttpBackendConfig cfg_;
};

}  // namespace llmeval::judge
