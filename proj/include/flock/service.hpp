#pragma once

#include <filesystem>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>

#include "flock/database.hpp"

namespace httplib {
class Server;
}

namespace flockmtl {

struct StoredPlan {
  std::string sql;
  ExecOverrides overrides;
  Json export_json;
  double wall_time_ms = 0.0;
  std::size_t provider_calls = 0;
};

/// Bounded plan history; the least recently used entry is evicted first.
class PlanStore {
 public:
  explicit PlanStore(std::size_t capacity = 100) : capacity_(capacity) {}

  std::string put(StoredPlan plan);
  std::optional<StoredPlan> get(const std::string& id);
  std::size_t size() const;
  std::size_t capacity() const noexcept { return capacity_; }

 private:
  using Entry = std::pair<std::string, StoredPlan>;
  mutable std::mutex mutex_;
  std::size_t capacity_;
  std::uint64_t next_id_ = 0;
  std::list<Entry> order_;  // most recent first
  std::unordered_map<std::string, std::list<Entry>::iterator> index_;
};

struct HttpResponse {
  int status = 200;
  Json body;
};

/// Maps an exception to a status code and a {"error": {...}} payload.
HttpResponse error_response(const std::exception& e);

struct ServiceOptions {
  std::filesystem::path ui_dir;
  std::size_t plan_capacity = 100;
};

/// JSON API over a Database. Engine calls are serialized; the plan store has its own lock.
class Service {
 public:
  Service(Database& db, ServiceOptions options = {});
  ~Service();

  /// Transport-independent dispatch, used by the HTTP server and by tests.
  HttpResponse handle(const std::string& method, const std::string& path, const std::string& body,
                      const std::map<std::string, std::string>& query = {});

  /// Blocks until stop(). Returns false when the port cannot be bound.
  bool listen(const std::string& host, int port);
  /// Binds an ephemeral port and returns it; serve with listen_after_bind().
  int bind_any_port(const std::string& host);
  bool listen_after_bind();
  void stop();

  PlanStore& plans() { return plans_; }

 private:
  HttpResponse query(const Json& body);
  HttpResponse ask(const Json& body);
  HttpResponse get_plan(const std::string& id);
  HttpResponse rerun(const std::string& id, const Json& body);
  HttpResponse tables();
  HttpResponse preview(const std::string& name, const std::map<std::string, std::string>& query);
  HttpResponse functions();

  Json respond_with_result(const QueryResult& result, const std::string& sql, const ExecOverrides& overrides,
                           std::optional<std::string>* plan_id_out = nullptr);
  void setup_http();

  Database& db_;
  ServiceOptions options_;
  std::mutex engine_mutex_;
  PlanStore plans_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace flockmtl
