#include "flock/catalog.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <sstream>

namespace flockmtl {

std::string_view resource_kind_name(ResourceKind kind) {
  return kind == ResourceKind::Model ? "MODEL" : "PROMPT";
}

std::string_view scope_name(Scope scope) { return scope == Scope::Global ? "GLOBAL" : "LOCAL"; }

std::string format_timestamp(Timestamp t) {
  std::time_t tt = std::chrono::system_clock::to_time_t(t);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

Timestamp parse_timestamp(const std::string& text) {
  std::tm tm{};
  std::istringstream in(text);
  in >> std::get_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  if (in.fail()) throw Error(ErrorCode::IoError, "bad timestamp '" + text + "'");
  return Timestamp(std::chrono::seconds(timegm(&tm)));
}

ResourceKind record_kind(const ResourceRecord& r) {
  return std::holds_alternative<ModelResource>(r) ? ResourceKind::Model : ResourceKind::Prompt;
}

const std::string& record_name(const ResourceRecord& r) {
  return std::visit([](const auto& x) -> const std::string& { return x.name; }, r);
}

int record_version(const ResourceRecord& r) {
  return std::visit([](const auto& x) { return x.version; }, r);
}

Scope record_scope(const ResourceRecord& r) {
  return std::visit([](const auto& x) { return x.scope; }, r);
}

Json record_to_json(const ResourceRecord& r) {
  Json j;
  j["kind"] = resource_kind_name(record_kind(r));
  j["name"] = record_name(r);
  j["version"] = record_version(r);
  j["scope"] = scope_name(record_scope(r));
  if (const auto* m = std::get_if<ModelResource>(&r)) {
    j["model_id"] = m->model_id;
    j["provider_id"] = m->provider_id;
    j["context_window_tokens"] = m->context_window_tokens;
    j["max_output_tokens"] = m->max_output_tokens;
    j["params"] = m->params.to_json();
    j["created_at"] = format_timestamp(m->created_at);
  } else {
    const auto& p = std::get<PromptResource>(r);
    j["text"] = p.text;
    j["created_at"] = format_timestamp(p.created_at);
  }
  return j;
}

ResourceRecord record_from_json(const Json& j) {
  Scope scope = j.at("scope").get<std::string>() == "GLOBAL" ? Scope::Global : Scope::Local;
  if (j.at("kind").get<std::string>() == "MODEL") {
    ModelResource m;
    m.name = j.at("name").get<std::string>();
    m.model_id = j.at("model_id").get<std::string>();
    m.provider_id = j.at("provider_id").get<std::string>();
    m.context_window_tokens = j.at("context_window_tokens").get<std::int64_t>();
    m.max_output_tokens = j.at("max_output_tokens").get<std::int64_t>();
    m.params = GenerationParams::from_json(j.value("params", Json::object()));
    m.version = j.at("version").get<int>();
    m.scope = scope;
    m.created_at = parse_timestamp(j.at("created_at").get<std::string>());
    return m;
  }
  PromptResource p;
  p.name = j.at("name").get<std::string>();
  p.text = j.at("text").get<std::string>();
  p.version = j.at("version").get<int>();
  p.scope = scope;
  p.created_at = parse_timestamp(j.at("created_at").get<std::string>());
  return p;
}

bool is_valid_resource_name(const std::string& name) {
  if (name.empty() || name.size() > 128) return false;
  if (!std::isalpha(static_cast<unsigned char>(name[0])) && name[0] != '_') return false;
  return std::all_of(name.begin(), name.end(), [](unsigned char c) {
    return std::isalnum(c) || c == '_' || c == '-' || c == '.';
  });
}

namespace {

ResourceKind definition_kind(const ResourceDefinition& d) {
  return std::holds_alternative<ModelDefinition>(d) ? ResourceKind::Model : ResourceKind::Prompt;
}

const std::string& definition_name(const ResourceDefinition& d) {
  return std::visit([](const auto& x) -> const std::string& { return x.name; }, d);
}

bool same_resource(const ResourceRecord& r, ResourceKind kind, const std::string& name) {
  return record_kind(r) == kind && record_name(r) == name;
}

}  // namespace

Catalog::Catalog(std::filesystem::path local_path, std::filesystem::path global_path,
                 std::shared_ptr<const ProviderRegistry> registry)
    : local_path_(std::move(local_path)),
      global_path_(std::move(global_path)),
      registry_(std::move(registry)) {
  if (std::filesystem::weakly_canonical(local_path_) == std::filesystem::weakly_canonical(global_path_)) {
    throw Error(ErrorCode::InvalidDefinition, "local and global catalog must be different files");
  }
  reload();
}

std::filesystem::path Catalog::default_global_path() {
  if (const char* env = std::getenv("FLOCK_GLOBAL_CATALOG"); env && *env) return env;
  if (const char* xdg = std::getenv("XDG_DATA_HOME"); xdg && *xdg) {
    return std::filesystem::path(xdg) / "flock" / "catalog.json";
  }
  if (const char* home = std::getenv("HOME"); home && *home) {
    return std::filesystem::path(home) / ".local" / "share" / "flock" / "catalog.json";
  }
  return std::filesystem::temp_directory_path() / "flock" / "catalog.json";
}

std::filesystem::path Catalog::local_path_for(const std::filesystem::path& workspace) {
  return workspace / ".flock" / "catalog.json";
}

std::vector<ResourceRecord> Catalog::read_store(const std::filesystem::path& path) {
  std::vector<ResourceRecord> out;
  std::ifstream in(path);
  if (!in) return out;
  Json doc;
  try {
    doc = Json::parse(in);
    for (const auto& item : doc) out.push_back(record_from_json(item));
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::IoError, "malformed catalog " + path.string() + ": " + e.what());
  }
  return out;
}

void Catalog::reload() {
  auto local = read_store(local_path_);
  auto global = read_store(global_path_);
  std::unique_lock lock(mutex_);
  local_ = std::move(local);
  global_ = std::move(global);
}

void Catalog::persist(Scope scope) const {
  const auto& file = path(scope);
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  Json doc = Json::array();
  for (const auto& r : store(scope)) doc.push_back(record_to_json(r));
  auto tmp = file;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write catalog " + tmp.string());
    out << doc.dump(2) << "\n";
  }
  std::filesystem::rename(tmp, file);
}

int Catalog::max_version(Scope scope, ResourceKind kind, const std::string& name) const {
  int best = 0;
  for (const auto& r : store(scope)) {
    if (same_resource(r, kind, name)) best = std::max(best, record_version(r));
  }
  return best;
}

ModelResource Catalog::inline_model(const std::string& model_id, const GenerationParams& params) const {
  auto info = registry_->model_metadata(model_id);
  ModelResource m;
  m.name = model_id;
  m.model_id = model_id;
  m.provider_id = info.provider_id;
  m.context_window_tokens = info.context_window_tokens;
  m.max_output_tokens = info.max_output_tokens;
  m.params = params;
  m.version = 1;
  m.scope = Scope::Local;
  return m;
}

ResourceRecord Catalog::materialize(const ResourceDefinition& def, Scope scope, int version) const {
  auto now = std::chrono::time_point_cast<std::chrono::seconds>(std::chrono::system_clock::now());
  if (!is_valid_resource_name(definition_name(def))) {
    throw Error(ErrorCode::InvalidDefinition, "invalid resource name '" + definition_name(def) + "'");
  }
  if (const auto* md = std::get_if<ModelDefinition>(&def)) {
    if (!registry_->has_provider(md->provider_id)) {
      throw Error(ErrorCode::InvalidDefinition, "unknown provider_id '" + md->provider_id + "'");
    }
    if (md->model_id.empty()) throw Error(ErrorCode::InvalidDefinition, "empty model id");
    ModelResource m;
    m.name = md->name;
    m.model_id = md->model_id;
    m.provider_id = md->provider_id;
    m.params = md->params;
    if (auto info = registry_->find_model(md->model_id)) {
      m.context_window_tokens = info->context_window_tokens;
      m.max_output_tokens = info->max_output_tokens;
    } else if (auto defaults = registry_->provider_defaults(md->provider_id)) {
      std::tie(m.context_window_tokens, m.max_output_tokens) = *defaults;
    } else {
      throw Error(ErrorCode::InvalidDefinition, "model '" + md->model_id +
                                                    "' is not in the provider registry and provider '" +
                                                    md->provider_id + "' has no defaults");
    }
    m.version = version;
    m.scope = scope;
    m.created_at = now;
    return m;
  }
  const auto& pd = std::get<PromptDefinition>(def);
  if (pd.text.empty()) throw Error(ErrorCode::InvalidDefinition, "prompt text must be non-empty");
  PromptResource p;
  p.name = pd.name;
  p.text = pd.text;
  p.version = version;
  p.scope = scope;
  p.created_at = now;
  return p;
}

ResourceRecord Catalog::create(Scope scope, const ResourceDefinition& definition) {
  std::unique_lock lock(mutex_);
  auto kind = definition_kind(definition);
  const auto& name = definition_name(definition);
  if (max_version(scope, kind, name) > 0) {
    throw Error(ErrorCode::DuplicateResource, std::string(resource_kind_name(kind)) + " '" + name +
                                                  "' already exists in " +
                                                  std::string(scope_name(scope)) + " scope");
  }
  auto record = materialize(definition, scope, 1);
  store(scope).push_back(record);
  persist(scope);
  return record;
}

ResourceRecord Catalog::update(const ResourceDefinition& definition, std::optional<Scope> scope) {
  std::unique_lock lock(mutex_);
  auto kind = definition_kind(definition);
  const auto& name = definition_name(definition);
  if (!scope) {
    if (max_version(Scope::Local, kind, name) > 0) {
      scope = Scope::Local;
    } else if (max_version(Scope::Global, kind, name) > 0) {
      scope = Scope::Global;
    }
  }
  int previous = scope ? max_version(*scope, kind, name) : 0;
  if (previous == 0) {
    throw Error(ErrorCode::NotFound, std::string(resource_kind_name(kind)) + " '" + name + "' not found");
  }
  auto record = materialize(definition, *scope, previous + 1);
  store(*scope).push_back(record);
  persist(*scope);
  return record;
}

ResourceRecord Catalog::resolve(ResourceKind kind, const std::string& name,
                                std::optional<int> version) const {
  std::shared_lock lock(mutex_);
  for (Scope scope : {Scope::Local, Scope::Global}) {
    const ResourceRecord* best = nullptr;
    for (const auto& r : store(scope)) {
      if (!same_resource(r, kind, name)) continue;
      if (version) {
        if (record_version(r) == *version) return r;
      } else if (best == nullptr || record_version(r) > record_version(*best)) {
        best = &r;
      }
    }
    if (best != nullptr) return *best;
    if (version && max_version(scope, kind, name) > 0) {
      throw Error(ErrorCode::VersionNotFound, std::string(resource_kind_name(kind)) + " '" + name +
                                                  "' has no version " + std::to_string(*version));
    }
  }
  throw Error(ErrorCode::NotFound, std::string(resource_kind_name(kind)) + " '" + name + "' not found");
}

ModelResource Catalog::resolve_model(const std::string& name, std::optional<int> version) const {
  return std::get<ModelResource>(resolve(ResourceKind::Model, name, version));
}

PromptResource Catalog::resolve_prompt(const std::string& name, std::optional<int> version) const {
  return std::get<PromptResource>(resolve(ResourceKind::Prompt, name, version));
}

std::size_t Catalog::remove(ResourceKind kind, const std::string& name, Scope scope) {
  std::unique_lock lock(mutex_);
  auto& records = store(scope);
  auto removed = std::erase_if(records, [&](const ResourceRecord& r) { return same_resource(r, kind, name); });
  if (removed > 0) persist(scope);
  return removed;
}

std::vector<ResourceRecord> Catalog::list(ResourceKind kind) const {
  std::shared_lock lock(mutex_);
  std::vector<ResourceRecord> out;
  for (Scope scope : {Scope::Local, Scope::Global}) {
    for (const auto& r : store(scope)) {
      if (record_kind(r) == kind) out.push_back(r);
    }
  }
  return out;
}

}  // namespace flockmtl
