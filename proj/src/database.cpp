#include "flock/database.hpp"

#include <algorithm>
#include <sstream>

#include "flock/error.hpp"
#include "flock/sql/binder.hpp"
#include "flock/sql/parser.hpp"

#ifndef FLOCK_DEFAULT_PROVIDERS
#define FLOCK_DEFAULT_PROVIDERS "config/providers.json"
#endif

namespace flockmtl {

namespace {

std::shared_ptr<const ProviderRegistry> load_registry(const DatabaseOptions& o) {
  if (o.providers_json) return std::make_shared<ProviderRegistry>(ProviderRegistry::from_json(*o.providers_json));
  std::filesystem::path path;
  if (o.providers_file) {
    path = *o.providers_file;
  } else if (const char* env = std::getenv("FLOCK_PROVIDERS"); env && *env) {
    path = env;
  } else if (std::filesystem::exists(o.workspace / "providers.json")) {
    path = o.workspace / "providers.json";
  } else {
    path = FLOCK_DEFAULT_PROVIDERS;
  }
  return std::make_shared<ProviderRegistry>(ProviderRegistry::load(path));
}

QueryResult message_result(std::vector<std::string> names, std::vector<Value> row) {
  QueryResult r;
  r.column_names = std::move(names);
  r.rows.push_back(std::move(row));
  return r;
}

}  // namespace

Database::Database(DatabaseOptions options) : options_(std::move(options)) {
  registry_ = load_registry(options_);
  mock_ = options_.mock ? options_.mock : std::make_shared<MockBackend>(registry_);
  hub_ = std::make_shared<ProviderHub>(
      ProviderHub::from_registry(*registry_, mock_, options_.route_all_to_mock, options_.sleeper));
  std::filesystem::path cache_file;
  if (options_.persistent_cache) {
    auto dir = options_.cache_dir.value_or(PredictionCache::default_dir(options_.workspace));
    std::filesystem::create_directories(dir);
    cache_file = dir / PredictionCache::kFileName;
  }
  cache_ = std::make_shared<PredictionCache>(cache_file);
  catalog_ = std::make_unique<Catalog>(Catalog::local_path_for(options_.workspace),
                                       options_.global_catalog.value_or(Catalog::default_global_path()), registry_);
  runtime_ = std::make_unique<InferenceRuntime>(hub_, cache_, options_.runtime);
}

QueryResult Database::execute(std::string_view sql, const ExecOverrides& overrides) {
  return execute_statement(sql::parse(sql), overrides);
}

std::vector<QueryResult> Database::execute_script(std::string_view sql, const ExecOverrides& overrides) {
  std::vector<QueryResult> out;
  for (const auto& stmt : sql::parse_script(sql)) out.push_back(execute_statement(stmt, overrides));
  return out;
}

QueryResult Database::execute_statement(const sql::Statement& stmt, const ExecOverrides& overrides) {
  return std::visit(
      [&](const auto& s) -> QueryResult {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, sql::SelectStmt>) {
          return run_select(s, overrides);
        } else if constexpr (std::is_same_v<T, sql::ResourceStmt>) {
          return run_resource(s);
        } else if constexpr (std::is_same_v<T, sql::CreateTableStmt>) {
          return run_create_table(s, overrides);
        } else if constexpr (std::is_same_v<T, sql::CreateFtsIndexStmt>) {
          return run_create_index(s);
        } else {
          return run_ask(s, overrides);
        }
      },
      stmt);
}

sql::BindEnvironment Database::bind_environment() const {
  sql::BindEnvironment env;
  env.table_columns = [this](const std::string& name) -> std::optional<std::vector<ColumnDef>> {
    const Table* t = table(name);
    if (!t) return std::nullopt;
    return t->columns();
  };
  env.fts_index = [this](const std::string& name) -> std::optional<std::pair<std::string, std::string>> {
    auto it = fts_.find(name);
    if (it == fts_.end()) return std::nullopt;
    return std::make_pair(it->second.id_column, it->second.text_column);
  };
  return env;
}

ExecEnvironment Database::exec_environment() const {
  ExecEnvironment env;
  env.table = [this](const std::string& name) { return table(name); };
  env.fts_index = [this](const std::string& name) { return fts_index(name); };
  env.catalog = catalog_.get();
  env.runtime = runtime_.get();
  return env;
}

LogicalPlan Database::plan(std::string_view sql) const {
  sql::Statement stmt = sql::parse(sql);
  auto* select = std::get_if<sql::SelectStmt>(&stmt);
  if (!select) throw Error(ErrorCode::BindingError, "only SELECT statements have a plan");
  return plan(*select);
}

LogicalPlan Database::plan(const sql::SelectStmt& stmt) const {
  return sql::bind_and_plan(stmt, *catalog_, bind_environment());
}

Json Database::explain(std::string_view sql, const ExecOverrides& overrides) const {
  return export_plan(plan(sql), nullptr, overrides, std::string(sql));
}

QueryResult Database::run_select(const sql::SelectStmt& stmt, const ExecOverrides& overrides) {
  return execute_plan(plan(stmt), exec_environment(), overrides);
}

QueryResult Database::run_resource(const sql::ResourceStmt& s) {
  using Action = sql::ResourceStmt::Action;
  if (s.action == Action::Delete) {
    Scope scope = s.scope ? *s.scope : record_scope(catalog_->resolve(s.kind, s.name));
    std::size_t removed = catalog_->remove(s.kind, s.name, scope);
    return message_result({"kind", "name", "scope", "versions_deleted"},
                          {Value::text(std::string(resource_kind_name(s.kind))), Value::text(s.name),
                           Value::text(std::string(scope_name(scope))),
                           Value::integer(static_cast<std::int64_t>(removed))});
  }
  ResourceDefinition def;
  if (s.kind == ResourceKind::Model) {
    def = ModelDefinition{s.name, s.model_id, s.provider, GenerationParams::from_json(s.params)};
  } else {
    def = PromptDefinition{s.name, s.text};
  }
  ResourceRecord rec = s.action == Action::Create ? catalog_->create(s.scope.value_or(Scope::Local), def)
                                                  : catalog_->update(def, s.scope);
  return message_result({"kind", "name", "scope", "version"},
                        {Value::text(std::string(resource_kind_name(record_kind(rec)))), Value::text(record_name(rec)),
                         Value::text(std::string(scope_name(record_scope(rec)))), Value::integer(record_version(rec))});
}

QueryResult Database::run_create_table(const sql::CreateTableStmt& s, const ExecOverrides& overrides) {
  Table t;
  if (s.path) {
    std::filesystem::path p(*s.path);
    if (p.is_relative()) p = options_.data_dir.value_or(options_.workspace) / p;
    t = flockmtl::load_csv(p, s.table);
  } else {
    QueryResult r = run_select(*s.query, overrides);
    t = Table::from_rows(s.table, r.column_names, std::move(r.rows));
  }
  auto rows = static_cast<std::int64_t>(t.row_count());
  register_table(std::move(t));
  return message_result({"table", "rows"}, {Value::text(s.table), Value::integer(rows)});
}

QueryResult Database::run_create_index(const sql::CreateFtsIndexStmt& s) {
  create_fts_index(s.table, s.id_column, s.text_column);
  const InvertedIndex* idx = fts_index(s.table);
  return message_result({"table", "documents", "terms"},
                        {Value::text(s.table), Value::integer(static_cast<std::int64_t>(idx->doc_count())),
                         Value::integer(static_cast<std::int64_t>(idx->term_count()))});
}

QueryResult Database::run_ask(const sql::AskStmt& s, const ExecOverrides& overrides) {
  sql::AskResult generated = generate_ask_sql(s.question);
  LogicalPlan p = plan(generated.statement);
  auto ask = std::make_shared<PlanNode>();
  ask->id = p.node_count++;
  ask->kind = PlanKind::Ask;
  ask->children = {p.root};
  ask->schema = p.root->schema;
  ask->detail = s.question;
  p.root = ask;
  QueryResult r = execute_plan(p, exec_environment(), overrides);
  r.generated_sql = generated.sql;
  return r;
}

ModelResource Database::ask_model() const {
  try {
    return catalog_->resolve_model(options_.ask_model);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::NotFound) throw;
  }
  return catalog_->inline_model(options_.ask_model);
}

sql::AskResult Database::generate_ask_sql(std::string_view question) const {
  if (tables_.empty()) throw Error(ErrorCode::BindingError, "ASK needs at least one table");
  ModelResource model = ask_model();
  auto validate = [this](const sql::SelectStmt& stmt) { plan(stmt); };
  return sql::generate_ask_sql(question, sql::schema_ddl(schemas()), model, hub_->client(model.provider_id), validate);
}

void Database::register_table(Table table) {
  std::string name = table.name();
  fts_.erase(name);
  tables_[name] = std::make_shared<const Table>(std::move(table));
}

void Database::load_csv(const std::filesystem::path& path, const std::string& table_name) {
  register_table(flockmtl::load_csv(path, table_name));
}

void Database::create_fts_index(const std::string& table_name, const std::string& id_column,
                                const std::string& text_column) {
  const Table* t = table(table_name);
  if (!t) throw Error(ErrorCode::BindingError, "unknown table '" + table_name + "'");
  auto id_idx = t->column_index(id_column);
  auto text_idx = t->column_index(text_column);
  if (!id_idx) throw Error(ErrorCode::BindingError, "unknown column '" + id_column + "' in " + table_name);
  if (!text_idx) throw Error(ErrorCode::BindingError, "unknown column '" + text_column + "' in " + table_name);
  std::vector<std::pair<std::string, std::string>> docs;
  docs.reserve(t->row_count());
  for (std::size_t r = 0; r < t->row_count(); ++r) {
    const Value& id = t->at(r, *id_idx);
    if (id.is_null()) continue;
    const Value& text = t->at(r, *text_idx);
    docs.emplace_back(group_key(id), text.is_null() ? std::string() : text.to_string());
  }
  fts_[table_name] = FtsEntry{id_column, text_column, InvertedIndex::build(docs)};
}

void Database::drop_table(const std::string& name) {
  tables_.erase(name);
  fts_.erase(name);
}

const Table* Database::table(const std::string& name) const {
  auto it = tables_.find(name);
  return it == tables_.end() ? nullptr : it->second.get();
}

std::vector<std::string> Database::table_names() const {
  std::vector<std::string> out;
  for (const auto& [name, t] : tables_) out.push_back(name);
  return out;
}

const InvertedIndex* Database::fts_index(const std::string& table) const {
  auto it = fts_.find(table);
  return it == fts_.end() ? nullptr : &it->second.index;
}

std::vector<std::pair<std::string, std::vector<ColumnDef>>> Database::schemas() const {
  std::vector<std::pair<std::string, std::vector<ColumnDef>>> out;
  for (const auto& [name, t] : tables_) out.emplace_back(name, t->columns());
  return out;
}

std::string format_result_table(const QueryResult& result, std::size_t max_width) {
  auto clip = [&](std::string s) {
    for (auto& c : s) {
      if (c == '\n' || c == '\r' || c == '\t') c = ' ';
    }
    if (s.size() > max_width) s = s.substr(0, max_width - 3) + "...";
    return s;
  };
  const std::size_t n = result.column_names.size();
  std::vector<std::vector<std::string>> cells;
  std::vector<std::size_t> width(n, 0);
  for (std::size_t c = 0; c < n; ++c) width[c] = clip(result.column_names[c]).size();
  for (const auto& row : result.rows) {
    std::vector<std::string> line;
    for (std::size_t c = 0; c < n; ++c) {
      line.push_back(clip(c < row.size() ? row[c].to_string() : ""));
      width[c] = std::max(width[c], line.back().size());
    }
    cells.push_back(std::move(line));
  }
  std::ostringstream out;
  auto emit = [&](const std::vector<std::string>& line) {
    for (std::size_t c = 0; c < n; ++c) {
      out << (c ? " | " : "") << line[c] << std::string(width[c] - line[c].size(), ' ');
    }
    out << "\n";
  };
  std::vector<std::string> header;
  for (const auto& name : result.column_names) header.push_back(clip(name));
  emit(header);
  for (std::size_t c = 0; c < n; ++c) out << (c ? "-+-" : "") << std::string(width[c], '-');
  out << "\n";
  for (const auto& line : cells) emit(line);
  out << "(" << result.rows.size() << (result.rows.size() == 1 ? " row)" : " rows)") << "\n";
  return out.str();
}

}  // namespace flockmtl
