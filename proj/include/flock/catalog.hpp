#pragma once

#include <chrono>
#include <filesystem>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <variant>
#include <vector>

#include "flock/provider.hpp"

namespace flockmtl {

enum class ResourceKind { Model, Prompt };
enum class Scope { Global, Local };

std::string_view resource_kind_name(ResourceKind kind);  // "MODEL" / "PROMPT"
std::string_view scope_name(Scope scope);                // "GLOBAL" / "LOCAL"

using Timestamp = std::chrono::sys_seconds;

std::string format_timestamp(Timestamp t);
Timestamp parse_timestamp(const std::string& text);

struct ModelResource {
  std::string name;
  std::string provider_id;
  std::string model_id;
  std::int64_t context_window_tokens = 0;
  std::int64_t max_output_tokens = 0;
  GenerationParams params;
  int version = 1;
  Scope scope = Scope::Local;
  Timestamp created_at{};

  bool operator==(const ModelResource&) const = default;
};

struct PromptResource {
  std::string name;
  std::string text;
  int version = 1;
  Scope scope = Scope::Local;
  Timestamp created_at{};

  bool operator==(const PromptResource&) const = default;
};

using ResourceRecord = std::variant<ModelResource, PromptResource>;

ResourceKind record_kind(const ResourceRecord& r);
const std::string& record_name(const ResourceRecord& r);
int record_version(const ResourceRecord& r);
Scope record_scope(const ResourceRecord& r);

Json record_to_json(const ResourceRecord& r);
ResourceRecord record_from_json(const Json& j);

struct ModelDefinition {
  std::string name;
  std::string model_id;
  std::string provider_id;
  GenerationParams params;
};

struct PromptDefinition {
  std::string name;
  std::string text;
};

using ResourceDefinition = std::variant<ModelDefinition, PromptDefinition>;

/// Versioned MODEL/PROMPT store split across a per-workspace file and a machine-wide file.
/// One writer at a time; readers share. Every mutation is written through to disk.
class Catalog {
 public:
  Catalog(std::filesystem::path local_path, std::filesystem::path global_path,
          std::shared_ptr<const ProviderRegistry> registry);

  /// `$FLOCK_GLOBAL_CATALOG`, else `$XDG_DATA_HOME/flock/catalog.json`,
  /// else `~/.local/share/flock/catalog.json`.
  static std::filesystem::path default_global_path();
  static std::filesystem::path local_path_for(const std::filesystem::path& workspace);

  ResourceRecord create(Scope scope, const ResourceDefinition& definition);
  /// New version in `scope`, or in whichever scope currently resolves the name.
  ResourceRecord update(const ResourceDefinition& definition, std::optional<Scope> scope = {});
  /// LOCAL first, then GLOBAL.
  ResourceRecord resolve(ResourceKind kind, const std::string& name,
                         std::optional<int> version = {}) const;
  ModelResource resolve_model(const std::string& name, std::optional<int> version = {}) const;
  PromptResource resolve_prompt(const std::string& name, std::optional<int> version = {}) const;
  std::size_t remove(ResourceKind kind, const std::string& name, Scope scope);

  std::vector<ResourceRecord> list(ResourceKind kind) const;
  /// Re-read both stores from disk.
  void reload();

  const ProviderRegistry& registry() const { return *registry_; }
  std::shared_ptr<const ProviderRegistry> registry_ptr() const { return registry_; }

  /// Builds a model resource for an inline `{'model': id}` reference.
  ModelResource inline_model(const std::string& model_id, const GenerationParams& params = {}) const;

 private:
  std::vector<ResourceRecord>& store(Scope scope) { return scope == Scope::Local ? local_ : global_; }
  const std::vector<ResourceRecord>& store(Scope scope) const {
    return scope == Scope::Local ? local_ : global_;
  }
  const std::filesystem::path& path(Scope scope) const {
    return scope == Scope::Local ? local_path_ : global_path_;
  }
  int max_version(Scope scope, ResourceKind kind, const std::string& name) const;
  ResourceRecord materialize(const ResourceDefinition& def, Scope scope, int version) const;
  void persist(Scope scope) const;
  static std::vector<ResourceRecord> read_store(const std::filesystem::path& path);

  std::filesystem::path local_path_;
  std::filesystem::path global_path_;
  std::shared_ptr<const ProviderRegistry> registry_;
  mutable std::shared_mutex mutex_;
  std::vector<ResourceRecord> local_;
  std::vector<ResourceRecord> global_;
};

bool is_valid_resource_name(const std::string& name);

}  // namespace flockmtl
