#include "flock/service.hpp"

#include <fstream>
#include <sstream>

#include "httplib.h"

#include "flock/error.hpp"
#include "flock/explain.hpp"
#include "flock/functions.hpp"

namespace flockmtl {

// ---- plan store ----------------------------------------------------------------

std::string PlanStore::put(StoredPlan plan) {
  std::lock_guard lock(mutex_);
  std::string id = std::to_string(++next_id_);
  order_.emplace_front(id, std::move(plan));
  index_[id] = order_.begin();
  while (order_.size() > capacity_) {
    index_.erase(order_.back().first);
    order_.pop_back();
  }
  return id;
}

std::optional<StoredPlan> PlanStore::get(const std::string& id) {
  std::lock_guard lock(mutex_);
  auto it = index_.find(id);
  if (it == index_.end()) return std::nullopt;
  order_.splice(order_.begin(), order_, it->second);
  return it->second->second;
}

std::size_t PlanStore::size() const {
  std::lock_guard lock(mutex_);
  return order_.size();
}

// ---- errors --------------------------------------------------------------------

namespace {

int status_for(const Error& e) {
  if (const auto* x = dynamic_cast<const ExecError*>(&e)) {
    if (x->provider_fatal()) return 502;
    switch (x->cause_code()) {
      case ErrorCode::TypeMismatch:
      case ErrorCode::DimensionMismatch:
      case ErrorCode::DomainError:
      case ErrorCode::ZeroVector:
      case ErrorCode::InvalidTemplate:
        return 400;
      default:
        return 500;
    }
  }
  switch (e.code()) {
    case ErrorCode::SyntaxError:
    case ErrorCode::BindingError:
    case ErrorCode::UnknownResource:
    case ErrorCode::MisplacedAggregate:
    case ErrorCode::InvalidOverride:
    case ErrorCode::InvalidTemplate:
    case ErrorCode::InvalidDefinition:
    case ErrorCode::DuplicateResource:
    case ErrorCode::NotFound:
    case ErrorCode::VersionNotFound:
    case ErrorCode::UnknownModel:
    case ErrorCode::IoError:
    case ErrorCode::RaggedRow:
    case ErrorCode::DuplicateDocId:
    case ErrorCode::TypeMismatch:
    case ErrorCode::DimensionMismatch:
    case ErrorCode::DomainError:
    case ErrorCode::ZeroVector:
    case ErrorCode::HeterogeneousRows:
      return 400;
    case ErrorCode::GenerationFailed:
      return 422;
    case ErrorCode::ProviderError:
      return 502;
    default:
      return 500;
  }
}

HttpResponse simple_error(int status, const std::string& code, const std::string& message) {
  return {status, {{"error", {{"code", code}, {"message", message}}}}};
}

}  // namespace

HttpResponse error_response(const std::exception& ex) {
  const auto* e = dynamic_cast<const Error*>(&ex);
  if (!e) return simple_error(500, "Internal", ex.what());
  Json err = {{"code", error_code_name(e->code())}, {"message", e->what()}};
  if (const auto* s = dynamic_cast<const SyntaxError*>(e)) {
    err["line"] = s->line();
    err["column"] = s->column();
    if (!s->expected().empty()) err["expected"] = s->expected();
  }
  if (const auto* x = dynamic_cast<const ExecError*>(e)) {
    err["node_id"] = x->node_id();
    err["cause"] = error_code_name(x->cause_code());
  }
  return {status_for(*e), {{"error", err}}};
}

// ---- service -------------------------------------------------------------------

namespace {

Json run_summary(const Json& export_json) {
  Json nodes = Json::array();
  for (const auto& n : export_json.at("nodes")) {
    if (!n.contains("llm_details")) continue;
    const Json& d = n["llm_details"];
    nodes.push_back({{"node_id", n["node_id"]},
                     {"function", d["function"]},
                     {"batch_mode", d["batch_mode"]},
                     {"serialization_format", d["serialization_format"]},
                     {"effective_batch_sizes", d.value("effective_batch_sizes", Json::array())},
                     {"provider_calls", d.value("provider_calls", 0)},
                     {"cache_hits", d.value("cache_hits", 0)},
                     {"wall_time_ms", d.value("wall_time_ms", 0.0)}});
  }
  return {{"wall_time_ms", export_json.value("query_wall_time_ms", 0.0)},
          {"provider_calls", export_json.value("provider_calls", 0)},
          {"llm_nodes", nodes}};
}

std::string required_string(const Json& body, const std::string& key) {
  if (!body.is_object() || !body.contains(key) || !body[key].is_string()) {
    throw Error(ErrorCode::InvalidDefinition, "request body needs a string field '" + key + "'");
  }
  return body[key].get<std::string>();
}

ExecOverrides overrides_of(const Json& body) {
  if (!body.is_object() || !body.contains("overrides")) return {};
  return ExecOverrides::from_json(body["overrides"]);
}

std::string content_type_for(const std::filesystem::path& p) {
  auto ext = p.extension().string();
  if (ext == ".html") return "text/html; charset=utf-8";
  if (ext == ".js" || ext == ".mjs") return "text/javascript";
  if (ext == ".css") return "text/css";
  if (ext == ".json") return "application/json";
  if (ext == ".svg") return "image/svg+xml";
  return "application/octet-stream";
}

}  // namespace

Service::Service(Database& db, ServiceOptions options)
    : db_(db), options_(std::move(options)), plans_(options_.plan_capacity) {}

Service::~Service() { stop(); }

Json Service::respond_with_result(const QueryResult& result, const std::string& sql, const ExecOverrides& overrides,
                                  std::optional<std::string>* plan_id_out) {
  Json out = result.to_json();
  out["provider_calls"] = result.provider_calls();
  if (result.plan.root) {
    StoredPlan stored;
    stored.sql = sql;
    stored.overrides = overrides;
    stored.export_json = export_plan(result.plan, &result, overrides, sql);
    stored.wall_time_ms = static_cast<double>(result.wall_time.count()) / 1000.0;
    stored.provider_calls = result.provider_calls();
    std::string id = plans_.put(std::move(stored));
    out["plan_id"] = id;
    if (plan_id_out) *plan_id_out = id;
  } else {
    out["plan_id"] = nullptr;
  }
  return out;
}

HttpResponse Service::query(const Json& body) {
  std::string sql = required_string(body, "sql");
  ExecOverrides overrides = overrides_of(body);
  std::lock_guard lock(engine_mutex_);
  auto results = db_.execute_script(sql, overrides);
  if (results.empty()) throw Error(ErrorCode::InvalidDefinition, "no statement to run");
  return {200, respond_with_result(results.back(), sql, overrides)};
}

HttpResponse Service::ask(const Json& body) {
  std::string question = required_string(body, "question");
  ExecOverrides overrides = overrides_of(body);
  std::lock_guard lock(engine_mutex_);
  QueryResult result = db_.execute_statement(sql::AskStmt{question}, overrides);
  std::string sql = result.generated_sql.value_or("");
  Json out = respond_with_result(result, sql, overrides);
  out["generated_sql"] = sql;
  out["question"] = question;
  return {200, out};
}

HttpResponse Service::get_plan(const std::string& id) {
  auto stored = plans_.get(id);
  if (!stored) return simple_error(404, "NotFound", "no plan with id " + id);
  Json out = stored->export_json;
  out["plan_id"] = id;
  return {200, out};
}

HttpResponse Service::rerun(const std::string& id, const Json& body) {
  auto stored = plans_.get(id);
  if (!stored) return simple_error(404, "NotFound", "no plan with id " + id);
  ExecOverrides overrides = overrides_of(body);
  std::lock_guard lock(engine_mutex_);
  auto results = db_.execute_script(stored->sql, overrides);
  std::optional<std::string> new_id;
  Json out = respond_with_result(results.back(), stored->sql, overrides, &new_id);
  if (!new_id) throw Error(ErrorCode::ExecError, "the stored statement no longer produces a plan");
  auto after = plans_.get(*new_id);
  out["previous_plan_id"] = id;
  out["comparison"] = {{"before", run_summary(stored->export_json)}, {"after", run_summary(after->export_json)}};
  return {200, out};
}

HttpResponse Service::tables() {
  std::lock_guard lock(engine_mutex_);
  Json list = Json::array();
  for (const auto& name : db_.table_names()) {
    const Table* t = db_.table(name);
    Json cols = Json::array();
    for (const auto& c : t->columns()) cols.push_back({{"name", c.name}, {"type", value_type_name(c.type)}});
    list.push_back({{"name", name}, {"columns", cols}, {"row_count", t->row_count()},
                    {"fts_index", db_.fts_index(name) != nullptr}});
  }
  return {200, {{"tables", list}}};
}

HttpResponse Service::preview(const std::string& name, const std::map<std::string, std::string>& query) {
  std::size_t limit = 20;
  if (auto it = query.find("limit"); it != query.end()) {
    char* end = nullptr;
    long v = std::strtol(it->second.c_str(), &end, 10);
    if (it->second.empty() || *end != '\0' || v < 0) {
      return simple_error(400, "InvalidDefinition", "limit must be a non-negative integer");
    }
    limit = static_cast<std::size_t>(std::min<long>(v, 1000));
  }
  std::lock_guard lock(engine_mutex_);
  const Table* t = db_.table(name);
  if (!t) return simple_error(404, "NotFound", "no table named " + name);
  return {200, t->to_json(limit)};
}

HttpResponse Service::functions() {
  Json list = Json::array();
  for (const auto& f : function_registry()) {
    list.push_back({{"name", f.name}, {"signature", f.signature}, {"description", f.description}});
  }
  return {200, {{"functions", list}}};
}

HttpResponse Service::handle(const std::string& method, const std::string& path, const std::string& body,
                             const std::map<std::string, std::string>& query) {
  try {
    Json json;
    if (method == "POST") {
      json = body.empty() ? Json::object() : Json::parse(body, nullptr, false);
      if (json.is_discarded()) return simple_error(400, "InvalidRequest", "request body is not valid JSON");
    }
    const std::string plan_prefix = "/api/plan/";
    const std::string table_prefix = "/api/tables/";
    if (method == "POST" && path == "/api/query") return this->query(json);
    if (method == "POST" && path == "/api/ask") return ask(json);
    if (method == "GET" && path == "/api/tables") return tables();
    if (method == "GET" && path == "/api/functions") return functions();
    if (method == "GET" && path == "/api/health") return {200, {{"status", "ok"}}};
    if (path.rfind(plan_prefix, 0) == 0) {
      std::string rest = path.substr(plan_prefix.size());
      const std::string suffix = "/rerun";
      if (method == "POST" && rest.size() > suffix.size() &&
          rest.compare(rest.size() - suffix.size(), suffix.size(), suffix) == 0) {
        return rerun(rest.substr(0, rest.size() - suffix.size()), json);
      }
      if (method == "GET" && !rest.empty() && rest.find('/') == std::string::npos) return get_plan(rest);
    }
    if (method == "GET" && path.rfind(table_prefix, 0) == 0) {
      std::string rest = path.substr(table_prefix.size());
      const std::string suffix = "/preview";
      if (rest.size() > suffix.size() && rest.compare(rest.size() - suffix.size(), suffix.size(), suffix) == 0) {
        return preview(rest.substr(0, rest.size() - suffix.size()), query);
      }
    }
    return simple_error(404, "NotFound", "no route for " + method + " " + path);
  } catch (const std::exception& e) {
    return error_response(e);
  }
}

void Service::setup_http() {
  if (server_) return;
  server_ = std::make_unique<httplib::Server>();
  auto dispatch = [this](const httplib::Request& req, httplib::Response& res) {
    std::map<std::string, std::string> query;
    for (const auto& [k, v] : req.params) query[k] = v;
    HttpResponse r = handle(req.method, req.path, req.body, query);
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  server_->Get(R"(/api/.*)", dispatch);
  server_->Post(R"(/api/.*)", dispatch);
  auto ui_dir = options_.ui_dir;
  server_->Get(R"(/(.*))", [ui_dir](const httplib::Request& req, httplib::Response& res) {
    std::string rel = req.matches[1];
    if (rel.empty()) rel = "index.html";
    if (rel.find("..") != std::string::npos || ui_dir.empty()) {
      res.status = 404;
      return;
    }
    std::ifstream in(ui_dir / rel, std::ios::binary);
    if (!in) {
      res.status = 404;
      res.set_content(R"({"error":{"code":"NotFound","message":"no such file"}})", "application/json");
      return;
    }
    std::stringstream buf;
    buf << in.rdbuf();
    res.set_content(buf.str(), content_type_for(rel));
  });
}

bool Service::listen(const std::string& host, int port) {
  setup_http();
  return server_->listen(host, port);
}

int Service::bind_any_port(const std::string& host) {
  setup_http();
  return server_->bind_to_any_port(host);
}

bool Service::listen_after_bind() { return server_->listen_after_bind(); }

void Service::stop() {
  if (server_) server_->stop();
}

}  // namespace flockmtl
