// OpenAI-compatible chat-completions / embeddings transport.

#include <cstdlib>

#include "flock/provider.hpp"
#include "httplib.h"

namespace flockmtl {
namespace {

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string prefix;  // path prefix, no trailing slash
};

Endpoint split_base_url(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw ProviderError(ProviderErrorKind::Fatal, "base_url lacks a scheme: " + url);
  }
  auto path_start = url.find('/', scheme_end + 3);
  Endpoint e;
  e.origin = url.substr(0, path_start);
  if (path_start != std::string::npos) {
    e.prefix = url.substr(path_start);
    while (!e.prefix.empty() && e.prefix.back() == '/') e.prefix.pop_back();
  }
  return e;
}

class HttpBackend final : public ModelBackend {
 public:
  explicit HttpBackend(ProviderConfig config) : config_(std::move(config)) {}

  ChatResponse chat(const ChatRequest& request) override {
    Json messages = Json::array();
    if (!request.system_text.empty()) {
      messages.push_back({{"role", "system"}, {"content", request.system_text}});
    }
    messages.push_back({{"role", "user"}, {"content", request.user_text}});
    Json body = {{"model", request.model_id}, {"messages", messages}};
    if (request.params.temperature) body["temperature"] = *request.params.temperature;
    if (request.params.top_p) body["top_p"] = *request.params.top_p;
    if (request.json_mode) body["response_format"] = {{"type", "json_object"}};

    Json reply = post("/chat/completions", body);
    ChatResponse out;
    try {
      const auto& content = reply.at("choices").at(0).at("message").at("content");
      out.text = content.is_string() ? content.get<std::string>() : content.dump();
      if (reply.contains("usage")) {
        out.prompt_tokens = reply["usage"].value("prompt_tokens", 0);
        out.completion_tokens = reply["usage"].value("completion_tokens", 0);
      }
    } catch (const Json::exception& e) {
      throw ProviderError(ProviderErrorKind::Fatal,
                          std::string("unexpected chat completion payload: ") + e.what());
    }
    return out;
  }

  std::vector<EmbeddingVector> embed(const std::string& model_id,
                                     const std::vector<std::string>& texts) override {
    Json body = {{"model", model_id}, {"input", texts}};
    Json reply = post("/embeddings", body);
    std::vector<EmbeddingVector> out(texts.size());
    try {
      for (const auto& item : reply.at("data")) {
        auto index = item.value("index", 0);
        if (index < 0 || static_cast<std::size_t>(index) >= out.size()) {
          throw ProviderError(ProviderErrorKind::Fatal, "embedding index out of range");
        }
        out[index] = item.at("embedding").get<std::vector<double>>();
      }
    } catch (const Json::exception& e) {
      throw ProviderError(ProviderErrorKind::Fatal,
                          std::string("unexpected embeddings payload: ") + e.what());
    }
    return out;
  }

 private:
  Json post(const std::string& path, const Json& body) {
    Endpoint endpoint = split_base_url(config_.base_url);
    httplib::Client client(endpoint.origin);
    client.set_connection_timeout(config_.timeout);
    client.set_read_timeout(config_.timeout);
    client.set_write_timeout(config_.timeout);

    httplib::Headers headers;
    if (!config_.api_key_env.empty()) {
      const char* key = std::getenv(config_.api_key_env.c_str());
      if (key == nullptr || *key == '\0') {
        throw ProviderError(ProviderErrorKind::Fatal,
                            "missing API key: set " + config_.api_key_env);
      }
      headers.emplace("Authorization", std::string("Bearer ") + key);
    }

    auto res = client.Post(endpoint.prefix + path, headers, body.dump(), "application/json");
    if (!res) {
      throw ProviderError(ProviderErrorKind::Transient,
                          "request to " + config_.provider_id + " failed: " +
                              httplib::to_string(res.error()));
    }
    if (res->status != 200) {
      throw ProviderError(classify_http_failure(res->status, res->body),
                          "HTTP " + std::to_string(res->status) + ": " + res->body);
    }
    try {
      return Json::parse(res->body);
    } catch (const Json::exception& e) {
      throw ProviderError(ProviderErrorKind::Transient,
                          std::string("malformed response body: ") + e.what());
    }
  }

  ProviderConfig config_;
};

}  // namespace

std::shared_ptr<ModelBackend> make_http_backend(const ProviderConfig& config) {
  if (config.base_url.rfind("mock://", 0) == 0) return nullptr;
  return std::make_shared<HttpBackend>(config);
}

}  // namespace flockmtl
