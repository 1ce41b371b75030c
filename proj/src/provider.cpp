#include "flock/provider.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <random>
#include <thread>

namespace flockmtl {

Json GenerationParams::to_json() const {
  Json j = Json::object();
  if (temperature) j["temperature"] = *temperature;
  if (top_p) j["top_p"] = *top_p;
  return j;
}

GenerationParams GenerationParams::from_json(const Json& j) {
  GenerationParams p;
  if (!j.is_object()) return p;
  if (j.contains("temperature")) p.temperature = j.at("temperature").get<double>();
  if (j.contains("top_p")) p.top_p = j.at("top_p").get<double>();
  return p;
}

ProviderRegistry ProviderRegistry::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open provider registry " + path.string());
  Json doc;
  try {
    doc = Json::parse(in);
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::IoError, "malformed provider registry " + path.string() + ": " + e.what());
  }
  return from_json(doc);
}

ProviderRegistry ProviderRegistry::from_json(const Json& doc) {
  ProviderRegistry reg;
  const Json providers = doc.value("providers", Json::object());
  for (const auto& [id, p] : providers.items()) {
    ProviderConfig cfg;
    cfg.provider_id = id;
    cfg.base_url = p.value("base_url", "");
    cfg.api_key_env = p.value("api_key_env", "");
    cfg.timeout = std::chrono::milliseconds(p.value("timeout_ms", 60'000));
    cfg.max_retries = p.value("max_retries", 3);
    reg.add_provider(cfg);
    if (p.contains("default_context_window") && p.contains("default_max_output")) {
      reg.provider_defaults_[id] = {p.at("default_context_window").get<std::int64_t>(),
                                    p.at("default_max_output").get<std::int64_t>()};
    }
  }
  const Json models = doc.value("models", Json::object());
  for (const auto& [id, m] : models.items()) {
    ModelInfo info;
    info.model_id = id;
    info.provider_id = m.at("provider").get<std::string>();
    info.context_window_tokens = m.at("context_window").get<std::int64_t>();
    info.max_output_tokens = m.at("max_output").get<std::int64_t>();
    if (m.contains("embedding_dimension")) {
      info.embedding_dimension = m.at("embedding_dimension").get<std::size_t>();
    }
    reg.add_model(info);
  }
  return reg;
}

bool ProviderRegistry::has_provider(const std::string& provider_id) const {
  return providers_.count(provider_id) > 0;
}

const ProviderConfig& ProviderRegistry::provider(const std::string& provider_id) const {
  auto it = providers_.find(provider_id);
  if (it == providers_.end()) {
    throw Error(ErrorCode::InvalidDefinition, "unknown provider '" + provider_id + "'");
  }
  return it->second;
}

std::vector<std::string> ProviderRegistry::provider_ids() const {
  std::vector<std::string> ids;
  for (const auto& [id, _] : providers_) ids.push_back(id);
  return ids;
}

ModelInfo ProviderRegistry::model_metadata(const std::string& model_id) const {
  auto found = find_model(model_id);
  if (!found) throw Error(ErrorCode::UnknownModel, "unknown model '" + model_id + "'");
  return *found;
}

std::optional<ModelInfo> ProviderRegistry::find_model(const std::string& model_id) const {
  auto it = models_.find(model_id);
  if (it == models_.end()) return std::nullopt;
  return it->second;
}

void ProviderRegistry::add_provider(ProviderConfig cfg) {
  if (cfg.timeout.count() <= 0) {
    throw Error(ErrorCode::InvalidDefinition, "provider timeout must be positive");
  }
  if (cfg.max_retries < 0) {
    throw Error(ErrorCode::InvalidDefinition, "provider max_retries must be >= 0");
  }
  auto id = cfg.provider_id;
  providers_[id] = std::move(cfg);
}

void ProviderRegistry::add_model(ModelInfo info) {
  if (!(info.context_window_tokens > info.max_output_tokens && info.max_output_tokens > 0)) {
    throw Error(ErrorCode::InvalidDefinition,
                "model '" + info.model_id + "' needs context_window > max_output > 0");
  }
  auto id = info.model_id;
  models_[id] = std::move(info);
}

std::optional<std::pair<std::int64_t, std::int64_t>> ProviderRegistry::provider_defaults(
    const std::string& provider_id) const {
  auto it = provider_defaults_.find(provider_id);
  if (it == provider_defaults_.end()) return std::nullopt;
  return it->second;
}

std::chrono::milliseconds RetryPolicy::delay(int retry, double unit) const {
  double ms = static_cast<double>(base.count()) * std::pow(factor, retry);
  ms *= 1.0 + jitter * (2.0 * unit - 1.0);
  ms = std::min(ms, static_cast<double>(cap.count()));
  return std::chrono::milliseconds(static_cast<std::int64_t>(std::llround(ms)));
}

bool mentions_context_overflow(const std::string& message) {
  static constexpr std::array<std::string_view, 6> patterns = {
      "context_length_exceeded", "maximum context length", "context window",
      "too many tokens",         "context length",         "reduce the length"};
  std::string lower(message.size(), '\0');
  std::transform(message.begin(), message.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return std::any_of(patterns.begin(), patterns.end(),
                     [&](std::string_view p) { return lower.find(p) != std::string::npos; });
}

ProviderErrorKind classify_http_failure(int status, const std::string& body) {
  if (status == 0) return ProviderErrorKind::Transient;  // connection / timeout
  if (status == 429) return ProviderErrorKind::RateLimited;
  if (status >= 500) return ProviderErrorKind::Transient;
  if (status == 408) return ProviderErrorKind::Transient;
  if ((status == 400 || status == 413) && mentions_context_overflow(body)) {
    return ProviderErrorKind::ContextOverflow;
  }
  return ProviderErrorKind::Fatal;
}

ProviderClient::ProviderClient(ProviderConfig config, std::shared_ptr<ModelBackend> backend,
                               Sleeper sleeper)
    : config_(std::move(config)), backend_(std::move(backend)), sleeper_(std::move(sleeper)) {
  if (!sleeper_) {
    sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  }
  policy_.max_retries = config_.max_retries;
}

template <typename Fn>
auto ProviderClient::with_retries(Fn&& attempt) const -> decltype(attempt()) {
  thread_local std::mt19937_64 rng{std::random_device{}()};
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int retry = 0;; ++retry) {
    try {
      return attempt();
    } catch (const ProviderError& e) {
      if (!e.retryable() || retry >= policy_.max_retries) throw;
      sleeper_(policy_.delay(retry, unit(rng)));
    }
  }
}

ChatResponse ProviderClient::chat_complete(const ChatRequest& request) const {
  if (request.system_text.empty() && request.user_text.empty()) {
    throw ProviderError(ProviderErrorKind::Fatal, "empty chat request");
  }
  return with_retries([&] { return backend_->chat(request); });
}

std::vector<EmbeddingVector> ProviderClient::embed(const std::string& model_id,
                                                   const std::vector<std::string>& texts) const {
  if (texts.empty()) return {};
  auto vectors = with_retries([&] { return backend_->embed(model_id, texts); });
  if (vectors.size() != texts.size()) {
    throw ProviderError(ProviderErrorKind::Fatal,
                        "embedding count mismatch: sent " + std::to_string(texts.size()) +
                            ", received " + std::to_string(vectors.size()));
  }
  return vectors;
}

void ProviderHub::add(const std::string& provider_id, std::shared_ptr<const ProviderClient> client) {
  clients_[provider_id] = std::move(client);
}

const ProviderClient& ProviderHub::client(const std::string& provider_id) const {
  auto it = clients_.find(provider_id);
  if (it == clients_.end()) {
    throw ProviderError(ProviderErrorKind::Fatal, "no client for provider '" + provider_id + "'");
  }
  return *it->second;
}

bool ProviderHub::has(const std::string& provider_id) const {
  return clients_.count(provider_id) > 0;
}

ProviderHub ProviderHub::from_registry(const ProviderRegistry& registry,
                                       std::shared_ptr<ModelBackend> mock, bool route_all_to_mock,
                                       Sleeper sleeper) {
  ProviderHub hub;
  for (const auto& id : registry.provider_ids()) {
    const auto& cfg = registry.provider(id);
    std::shared_ptr<ModelBackend> backend;
    if (route_all_to_mock || id == "mock") {
      backend = mock;
    } else {
      backend = make_http_backend(cfg);
    }
    if (!backend) continue;
    hub.add(id, std::make_shared<ProviderClient>(cfg, backend, sleeper));
  }
  return hub;
}

}  // namespace flockmtl
