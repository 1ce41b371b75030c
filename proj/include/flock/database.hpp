#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "flock/catalog.hpp"
#include "flock/executor.hpp"
#include "flock/explain.hpp"
#include "flock/mock_provider.hpp"
#include "flock/retrieval.hpp"
#include "flock/runtime.hpp"
#include "flock/sql/ask.hpp"
#include "flock/sql/ast.hpp"
#include "flock/sql/binder.hpp"
#include "flock/table.hpp"

namespace flockmtl {

struct DatabaseOptions {
  std::filesystem::path workspace = ".";
  /// Base directory for relative CSV paths; defaults to the workspace.
  std::optional<std::filesystem::path> data_dir;
  /// Provider registry file; defaults to `<workspace>/providers.json` when present, else the bundled one.
  std::optional<std::filesystem::path> providers_file;
  /// Inline registry document; wins over `providers_file`.
  std::optional<Json> providers_json;
  std::optional<std::filesystem::path> global_catalog;
  std::optional<std::filesystem::path> cache_dir;
  /// False keeps predictions in memory only.
  bool persistent_cache = true;

  /// Backend serving the "mock" provider; created on demand when null.
  std::shared_ptr<MockBackend> mock;
  /// Serve every provider id from the mock (offline runs).
  bool route_all_to_mock = false;
  Sleeper sleeper;
  RuntimeOptions runtime;
  /// Catalog model name or model id used by ASK.
  std::string ask_model = "gpt-4o";
};

/// Tables, full-text indexes, catalog, and the inference runtime behind one SQL entry point.
/// Not thread-safe; callers serialize access.
class Database {
 public:
  explicit Database(DatabaseOptions options = {});

  /// Exactly one statement.
  QueryResult execute(std::string_view sql, const ExecOverrides& overrides = {});
  /// One result per statement, in order. Stops at the first error.
  std::vector<QueryResult> execute_script(std::string_view sql, const ExecOverrides& overrides = {});
  QueryResult execute_statement(const sql::Statement& stmt, const ExecOverrides& overrides = {});

  /// Bound plan of a SELECT.
  LogicalPlan plan(std::string_view sql) const;
  LogicalPlan plan(const sql::SelectStmt& stmt) const;
  /// Plan export without running the query.
  Json explain(std::string_view sql, const ExecOverrides& overrides = {}) const;

  sql::AskResult generate_ask_sql(std::string_view question) const;

  void register_table(Table table);
  void load_csv(const std::filesystem::path& path, const std::string& table_name);
  /// Throws Error(BindingError) for unknown columns, Error(DuplicateDocId) for repeated ids.
  void create_fts_index(const std::string& table, const std::string& id_column, const std::string& text_column);
  void drop_table(const std::string& name);

  const Table* table(const std::string& name) const;
  std::vector<std::string> table_names() const;
  const InvertedIndex* fts_index(const std::string& table) const;
  /// Name, column pairs for every table, sorted by name.
  std::vector<std::pair<std::string, std::vector<ColumnDef>>> schemas() const;

  Catalog& catalog() { return *catalog_; }
  const Catalog& catalog() const { return *catalog_; }
  const InferenceRuntime& runtime() const { return *runtime_; }
  PredictionCache& cache() const { return *cache_; }
  MockBackend& mock() const { return *mock_; }
  const ProviderRegistry& registry() const { return *registry_; }
  const ProviderHub& providers() const { return *hub_; }
  const DatabaseOptions& options() const { return options_; }

 private:
  struct FtsEntry {
    std::string id_column;
    std::string text_column;
    InvertedIndex index;
  };

  sql::BindEnvironment bind_environment() const;
  ExecEnvironment exec_environment() const;
  QueryResult run_select(const sql::SelectStmt& stmt, const ExecOverrides& overrides);
  QueryResult run_resource(const sql::ResourceStmt& stmt);
  QueryResult run_create_table(const sql::CreateTableStmt& stmt, const ExecOverrides& overrides);
  QueryResult run_create_index(const sql::CreateFtsIndexStmt& stmt);
  QueryResult run_ask(const sql::AskStmt& stmt, const ExecOverrides& overrides);
  ModelResource ask_model() const;

  DatabaseOptions options_;
  std::shared_ptr<const ProviderRegistry> registry_;
  std::shared_ptr<MockBackend> mock_;
  std::shared_ptr<const ProviderHub> hub_;
  std::shared_ptr<PredictionCache> cache_;
  std::unique_ptr<Catalog> catalog_;
  std::unique_ptr<InferenceRuntime> runtime_;
  std::map<std::string, std::shared_ptr<const Table>> tables_;
  std::map<std::string, FtsEntry> fts_;
};

/// Result rows as an aligned text table for terminals.
std::string format_result_table(const QueryResult& result, std::size_t max_width = 60);

}  // namespace flockmtl
