#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "flock/error.hpp"
#include "flock/value.hpp"

namespace flockmtl {

using EmbeddingVector = std::vector<double>;

struct ProviderConfig {
  std::string provider_id;
  std::string base_url;
  std::string api_key_env;  // empty: no key required (local runtimes, mock)
  std::chrono::milliseconds timeout{60'000};
  int max_retries = 3;
};

/// Static facts about a model, read from the provider registry file.
struct ModelInfo {
  std::string model_id;
  std::string provider_id;
  std::int64_t context_window_tokens = 0;
  std::int64_t max_output_tokens = 0;
  std::optional<std::size_t> embedding_dimension;
};

struct GenerationParams {
  std::optional<double> temperature;
  std::optional<double> top_p;

  bool operator==(const GenerationParams&) const = default;
  Json to_json() const;
  static GenerationParams from_json(const Json& j);
};

/// Provider and model registry, usually loaded from `providers.json`.
class ProviderRegistry {
 public:
  static ProviderRegistry load(const std::filesystem::path& path);
  static ProviderRegistry from_json(const Json& doc);

  bool has_provider(const std::string& provider_id) const;
  const ProviderConfig& provider(const std::string& provider_id) const;
  std::vector<std::string> provider_ids() const;

  /// Throws Error(UnknownModel) when the id is not registered.
  ModelInfo model_metadata(const std::string& model_id) const;
  std::optional<ModelInfo> find_model(const std::string& model_id) const;

  void add_provider(ProviderConfig cfg);
  void add_model(ModelInfo info);

  /// Provider-level fallback window, used for models that are not listed.
  std::optional<std::pair<std::int64_t, std::int64_t>> provider_defaults(
      const std::string& provider_id) const;

 private:
  std::map<std::string, ProviderConfig> providers_;
  std::map<std::string, std::pair<std::int64_t, std::int64_t>> provider_defaults_;
  std::map<std::string, ModelInfo> models_;
};

struct ChatRequest {
  std::string model_id;
  std::string system_text;
  std::string user_text;
  GenerationParams params;
  bool json_mode = false;
};

struct ChatResponse {
  std::string text;
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
};

/// One transport attempt per call; throws ProviderError. Retrying is ProviderClient's job.
class ModelBackend {
 public:
  virtual ~ModelBackend() = default;
  virtual ChatResponse chat(const ChatRequest& request) = 0;
  virtual std::vector<EmbeddingVector> embed(const std::string& model_id,
                                             const std::vector<std::string>& texts) = 0;
};

using Sleeper = std::function<void(std::chrono::milliseconds)>;

/// Exponential backoff with jitter: base 250 ms, factor 2, +/-20 %, capped at 8 s.
struct RetryPolicy {
  int max_retries = 3;
  std::chrono::milliseconds base{250};
  double factor = 2.0;
  double jitter = 0.2;
  std::chrono::milliseconds cap{8'000};

  /// Delay before retry number `retry` (0-based). `unit` in [0, 1) selects the jitter point.
  std::chrono::milliseconds delay(int retry, double unit) const;
};

/// Classification of an HTTP failure into the provider error taxonomy.
ProviderErrorKind classify_http_failure(int status, const std::string& body);
bool mentions_context_overflow(const std::string& message);

/// Provider endpoint plus retry policy. Immutable after construction.
class ProviderClient {
 public:
  ProviderClient(ProviderConfig config, std::shared_ptr<ModelBackend> backend, Sleeper sleeper = {});

  ChatResponse chat_complete(const ChatRequest& request) const;
  std::vector<EmbeddingVector> embed(const std::string& model_id,
                                     const std::vector<std::string>& texts) const;

  const ProviderConfig& config() const noexcept { return config_; }
  const RetryPolicy& retry_policy() const noexcept { return policy_; }

 private:
  template <typename Fn>
  auto with_retries(Fn&& attempt) const -> decltype(attempt());

  ProviderConfig config_;
  std::shared_ptr<ModelBackend> backend_;
  Sleeper sleeper_;
  RetryPolicy policy_;
};

/// Routes provider ids to clients.
class ProviderHub {
 public:
  void add(const std::string& provider_id, std::shared_ptr<const ProviderClient> client);
  const ProviderClient& client(const std::string& provider_id) const;
  bool has(const std::string& provider_id) const;

  /// HTTP clients for every registered provider except "mock", which maps to `mock`.
  /// When `route_all_to_mock` is set every provider id is served by `mock`.
  static ProviderHub from_registry(const ProviderRegistry& registry,
                                   std::shared_ptr<ModelBackend> mock,
                                   bool route_all_to_mock, Sleeper sleeper = {});

 private:
  std::map<std::string, std::shared_ptr<const ProviderClient>> clients_;
};

std::shared_ptr<ModelBackend> make_http_backend(const ProviderConfig& config);

}  // namespace flockmtl
