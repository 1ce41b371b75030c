#include <chrono>
#include <thread>

#include "doctest.h"
#include "flock/database.hpp"
#include "flock/provider.hpp"
#include "flock/service.hpp"
#include "httplib.h"
#include "support/support.hpp"

using namespace flockmtl;
using namespace flocktest;

namespace {

const char* kReviewQuery =
    "SELECT id, llm_complete({'model': 'gpt-4o'}, {'prompt': 'Rate the severity from 1 to 5'}, "
    "{'id': id, 'review': review}) AS severity FROM bank_reviews";

struct Env {
  TempDir ws;
  std::shared_ptr<MockBackend> mock = make_mock();
  std::unique_ptr<Database> db;
  std::unique_ptr<Service> service;

  explicit Env(std::size_t max_parallel = 4) {
    auto opts = offline_options(ws.path(), mock);
    opts.runtime.max_parallel = max_parallel;
    db = std::make_unique<Database>(opts);
    db->load_csv(fixtures_dir() / "bank_reviews.csv", "bank_reviews");
    db->execute_script(read_file(fixtures_dir() / "queries" / "setup.sql"));
    db->execute_script(read_file(fixtures_dir() / "queries" / "q1.sql"));
    service = std::make_unique<Service>(*db);
  }

  HttpResponse post(const std::string& path, const Json& body) { return service->handle("POST", path, body.dump(), {}); }
  HttpResponse get(const std::string& path, const std::map<std::string, std::string>& q = {}) {
    return service->handle("GET", path, "", q);
  }
};

const Json* llm_node(const Json& exported, const std::string& fn) {
  for (const auto& n : exported.at("nodes")) {
    if (n.contains("llm_details") && n["llm_details"]["function"] == fn) return &n;
  }
  return nullptr;
}

}  // namespace

TEST_SUITE("service") {

TEST_CASE("query endpoint runs Query 2 and stores a plan") {
  Env env;
  auto r = env.post("/api/query", {{"sql", read_file(fixtures_dir() / "queries" / "q2.sql")}});
  REQUIRE(r.status == 200);
  CHECK(r.body["plan_id"].is_string());
  CHECK(r.body["columns"].size() == 4);
  CHECK(r.body["rows"].size() == r.body["row_count"]);

  auto plan = env.get("/api/plan/" + r.body["plan_id"].get<std::string>());
  REQUIRE(plan.status == 200);
  const Json* filter = llm_node(plan.body, "llm_filter");
  REQUIRE(filter != nullptr);
  CHECK_FALSE((*filter)["llm_details"]["meta_prompt_full"].get<std::string>().empty());
  CHECK((*filter)["llm_details"]["serialization_format"] == "XML");
  CHECK((*filter)["llm_details"]["batch_mode"] == "Auto");
  for (const auto& n : plan.body["nodes"]) {
    bool is_llm = n["kind"] == "LlmScalar" || n["kind"] == "LlmAggregate";
    CHECK(n.contains("llm_details") == is_llm);
  }
}

TEST_CASE("errors carry status codes and machine-readable payloads") {
  Env env;
  auto broken = env.post("/api/query", {{"sql", "SELECT id FROM bank_reviews WHERE ("}});
  CHECK(broken.status == 400);
  CHECK(broken.body["error"]["code"] == "SyntaxError");
  CHECK(broken.body["error"]["line"] == 1);
  CHECK(broken.body["error"]["column"].get<int>() > 1);

  CHECK(env.post("/api/query", {{"sql", "SELECT nope FROM bank_reviews"}}).status == 400);
  CHECK(env.post("/api/query", Json::object()).status == 400);
  CHECK(env.service->handle("POST", "/api/query", "{not json", {}).status == 400);
  CHECK(env.get("/api/plan/does-not-exist").status == 404);
  CHECK(env.post("/api/plan/does-not-exist/rerun", Json::object()).status == 404);
  CHECK(env.get("/api/nowhere").status == 404);

  auto bad_override = env.post("/api/query", {{"sql", kReviewQuery}, {"overrides", {{"batch_mode", 0}}}});
  CHECK(bad_override.status == 400);
  CHECK(bad_override.body["error"]["code"] == "InvalidOverride");
  auto bad_template =
      env.post("/api/query", {{"sql", kReviewQuery}, {"overrides", {{"prompt_template", "{{whatever}}"}}}});
  CHECK(bad_template.status == 400);

  env.mock->script(mock::any(), {MockReply::error(ProviderErrorKind::Fatal)});
  auto fatal = env.post("/api/query", {{"sql", kReviewQuery}});
  CHECK(fatal.status == 502);
  CHECK(fatal.body["error"].contains("node_id"));
}

TEST_CASE("tables, preview and functions") {
  Env env;
  auto t = env.get("/api/tables");
  REQUIRE(t.status == 200);
  bool saw_passages = false;
  for (const auto& entry : t.body["tables"]) {
    if (entry["name"] == "research_passages") {
      saw_passages = true;
      CHECK(entry["fts_index"] == true);
      CHECK(entry["row_count"] == 20);
    }
  }
  CHECK(saw_passages);
  auto p = env.get("/api/tables/bank_reviews/preview", {{"limit", "5"}});
  REQUIRE(p.status == 200);
  CHECK(p.body["rows"].size() == 5);
  CHECK(p.body["row_count"] == 60);
  CHECK(env.get("/api/tables/bank_reviews/preview").body["rows"].size() == 20);
  CHECK(env.get("/api/tables/bank_reviews/preview", {{"limit", "x"}}).status == 400);
  CHECK(env.get("/api/tables/missing/preview").status == 404);
  auto f = env.get("/api/functions");
  bool has_rerank = false;
  for (const auto& fn : f.body["functions"]) has_rerank |= fn["name"] == "llm_rerank";
  CHECK(has_rerank);
}

TEST_CASE("rerun with Manual(30) under sequential dispatch is slower and shows the batches") {
  Env env(1);
  env.mock->set_latency({std::chrono::milliseconds(50), std::chrono::milliseconds(1)});
  auto first = env.post("/api/query", {{"sql", kReviewQuery}});
  REQUIRE(first.status == 200);
  const std::string id = first.body["plan_id"];

  auto rerun = env.post("/api/plan/" + id + "/rerun", {{"overrides", {{"batch_mode", 30}, {"cache", false}}}});
  REQUIRE(rerun.status == 200);
  CHECK(rerun.body["previous_plan_id"] == id);
  CHECK(rerun.body["plan_id"] != id);
  const Json& before = rerun.body["comparison"]["before"];
  const Json& after = rerun.body["comparison"]["after"];
  CHECK(before["llm_nodes"][0]["effective_batch_sizes"] == Json::array({60}));
  CHECK(after["llm_nodes"][0]["effective_batch_sizes"] == Json::array({30, 30}));
  CHECK(after["llm_nodes"][0]["batch_mode"] == "Manual(30)");
  CHECK(before["provider_calls"] == 1);
  CHECK(after["provider_calls"] == 2);
  // One request costs 50 + 60 ms; two sequential requests cost 2 * (50 + 30) ms.
  CHECK(before["wall_time_ms"].get<double>() >= 110.0);
  CHECK(after["wall_time_ms"].get<double>() >= 160.0);
  CHECK(after["wall_time_ms"].get<double>() > before["wall_time_ms"].get<double>());
  CHECK(rerun.body["rows"] == first.body["rows"]);

  auto stored = env.get("/api/plan/" + rerun.body["plan_id"].get<std::string>());
  CHECK(stored.body["overrides"]["batch_mode"] == 30);
  CHECK(stored.body["overrides"]["cache"] == false);
}

TEST_CASE("rerun with identical overrides hits the cache") {
  Env env;
  auto first = env.post("/api/query", {{"sql", kReviewQuery}});
  auto again = env.post("/api/plan/" + first.body["plan_id"].get<std::string>() + "/rerun", Json::object());
  REQUIRE(again.status == 200);
  CHECK(again.body["rows"].dump() == first.body["rows"].dump());
  CHECK(again.body["comparison"]["after"]["provider_calls"] == 0);
  CHECK(again.body["comparison"]["after"]["llm_nodes"][0]["cache_hits"] == 60);
}

TEST_CASE("template override replaces the meta-prompt") {
  Env env;
  auto first = env.post("/api/query", {{"sql", kReviewQuery}});
  const std::string tmpl = "CUSTOM TEMPLATE\nTask: {{user_prompt}}\n{{contract}}\nRows:\n{{tuples}}";
  auto rerun = env.post("/api/plan/" + first.body["plan_id"].get<std::string>() + "/rerun",
                        {{"overrides", {{"prompt_template", tmpl}}}});
  REQUIRE(rerun.status == 200);
  auto plan = env.get("/api/plan/" + rerun.body["plan_id"].get<std::string>());
  const Json* node = llm_node(plan.body, "llm_complete");
  REQUIRE(node != nullptr);
  const auto meta = (*node)["llm_details"]["meta_prompt_full"].get<std::string>();
  CHECK(meta.rfind("CUSTOM TEMPLATE\nTask: Rate the severity from 1 to 5", 0) == 0);
  CHECK((*node)["llm_details"]["prompt_template"] == tmpl);
  CHECK(rerun.body["comparison"]["after"]["provider_calls"] == 1);
  const auto last = env.mock->request_log().back();
  CHECK((last.system_text + last.user_text).find("CUSTOM TEMPLATE") != std::string::npos);
}

TEST_CASE("ask endpoint") {
  Env env;
  const std::string generated =
      "SELECT id, review, llm_complete({'model': 'gpt-4o'}, {'prompt': 'Assign a severity score from 1 to 5'}, "
      "{'review': review}) AS severity FROM bank_reviews WHERE llm_filter({'model': 'gpt-4o'}, "
      "{'prompt': 'mentions a technical issue'}, {'review': review})";
  SUBCASE("scripted generation") {
    env.mock->script(mock::contains("Question:"), {MockReply::text("```sql\n" + generated + "\n```")});
    env.mock->answer_per_tuple(mock::contains("mentions a technical issue"), [](const SerializedTuple& t) {
      auto text = t.fields["review"].get<std::string>();
      return text.find("error") != std::string::npos || text.find("crash") != std::string::npos;
    });
    auto r = env.post("/api/ask", {{"question", "list reviews mentioning technical issues and assign a severity "
                                                "score to each issue"}});
    REQUIRE(r.status == 200);
    CHECK(r.body["generated_sql"] == generated);
    auto sql = r.body["generated_sql"].get<std::string>();
    CHECK(sql.find("llm_filter") != std::string::npos);
    CHECK(sql.find("llm_complete") != std::string::npos);
    CHECK(r.body["rows"].size() > 0);
    CHECK(r.body["rows"].size() < 60);
    CHECK(r.body["plan_id"].is_string());
  }
  SUBCASE("empty question") { CHECK(env.post("/api/ask", {{"question", ""}}).status == 400); }
  SUBCASE("unparseable twice") {
    env.mock->script(mock::contains("Question:"), {MockReply::text("sorry"), MockReply::text("still sorry")});
    auto r = env.post("/api/ask", {{"question", "anything"}});
    CHECK(r.status == 422);
    CHECK(r.body["error"]["code"] == "GenerationFailed");
  }
}

TEST_CASE("plan store evicts the least recently used entry") {
  PlanStore store(3);
  auto a = store.put({"a"}), b = store.put({"b"}), c = store.put({"c"});
  CHECK(store.get(a).has_value());  // a becomes most recent
  auto d = store.put({"d"});
  CHECK_FALSE(store.get(b).has_value());
  CHECK(store.get(a)->sql == "a");
  CHECK(store.get(c).has_value());
  CHECK(store.get(d).has_value());
  CHECK(store.size() == 3);
  std::set<std::string> ids = {a, b, c, d};
  CHECK(ids.size() == 4);
}

TEST_CASE("HTTP transport") {
  Env env;
  int port = env.service->bind_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread server([&] { env.service->listen_after_bind(); });
  httplib::Client client("127.0.0.1", port);
  client.set_read_timeout(30, 0);
  auto health = client.Get("/api/health");
  REQUIRE(health);
  CHECK(health->status == 200);
  auto res = client.Post("/api/query", Json{{"sql", "SELECT count(*) AS n FROM bank_reviews"}}.dump(),
                         "application/json");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(Json::parse(res->body)["rows"][0][0] == 60);
  auto preview = client.Get("/api/tables/bank_reviews/preview?limit=3");
  REQUIRE(preview);
  CHECK(Json::parse(preview->body)["rows"].size() == 3);
  env.service->stop();
  server.join();
}

TEST_CASE("HTTP provider speaks the chat-completions protocol") {
  httplib::Server fake;
  std::atomic<int> chat_hits{0};
  Json last_chat;
  std::mutex m;
  fake.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    int n = ++chat_hits;
    {
      std::lock_guard lock(m);
      last_chat = Json::parse(req.body);
    }
    if (req.get_header_value("Authorization") != "Bearer test-key") {
      res.status = 401;
      res.set_content(R"({"error":{"message":"bad key"}})", "application/json");
      return;
    }
    if (Json::parse(req.body)["messages"][1]["content"] == "overflow") {
      res.status = 400;
      res.set_content(R"({"error":{"message":"This model's maximum context length is 8192 tokens","code":"context_length_exceeded"}})",
                      "application/json");
      return;
    }
    if (Json::parse(req.body)["messages"][1]["content"] == "busy" && n % 2 == 1) {
      res.status = 429;
      res.set_content(R"({"error":{"message":"slow down"}})", "application/json");
      return;
    }
    Json reply = {{"choices", {{{"message", {{"role", "assistant"}, {"content", "pong"}}}}}},
                  {"usage", {{"prompt_tokens", 5}, {"completion_tokens", 1}}}};
    res.set_content(reply.dump(), "application/json");
  });
  fake.Post("/v1/embeddings", [&](const httplib::Request& req, httplib::Response& res) {
    Json body = Json::parse(req.body);
    Json data = Json::array();
    for (std::size_t i = 0; i < body["input"].size(); ++i) {
      data.push_back({{"index", i}, {"embedding", {static_cast<double>(i), 1.0, 2.0}}});
    }
    std::reverse(data.begin(), data.end());  // providers may answer out of order
    res.set_content(Json{{"data", data}}.dump(), "application/json");
  });
  int port = fake.bind_to_any_port("127.0.0.1");
  std::thread server([&] { fake.listen_after_bind(); });
  while (!fake.is_running()) std::this_thread::sleep_for(std::chrono::milliseconds(1));

  ::setenv("FLOCK_TEST_PROVIDER_KEY", "test-key", 1);
  ProviderConfig cfg;
  cfg.provider_id = "local";
  cfg.base_url = "http://127.0.0.1:" + std::to_string(port) + "/v1";
  cfg.api_key_env = "FLOCK_TEST_PROVIDER_KEY";
  cfg.max_retries = 2;
  ProviderClient client(cfg, make_http_backend(cfg), [](std::chrono::milliseconds) {});

  auto reply = client.chat_complete({"gpt-4o", "be brief", "ping", {0.2, std::nullopt}, true});
  CHECK(reply.text == "pong");
  CHECK(reply.prompt_tokens == 5);
  {
    std::lock_guard lock(m);
    CHECK(last_chat["model"] == "gpt-4o");
    CHECK(last_chat["messages"][0]["role"] == "system");
    CHECK(last_chat["messages"][1]["content"] == "ping");
    CHECK(last_chat["response_format"]["type"] == "json_object");
    CHECK(last_chat["temperature"] == doctest::Approx(0.2));
  }

  chat_hits = 0;
  try {
    client.chat_complete({"gpt-4o", "s", "overflow", {}, false});
    FAIL("expected overflow");
  } catch (const ProviderError& e) {
    CHECK(e.kind() == ProviderErrorKind::ContextOverflow);
  }
  CHECK(chat_hits == 1);

  chat_hits = 0;
  CHECK(client.chat_complete({"gpt-4o", "s", "busy", {}, false}).text == "pong");
  CHECK(chat_hits == 2);

  auto vectors = client.embed("text-embedding-3-small", {"a", "b", "c"});
  REQUIRE(vectors.size() == 3);
  CHECK(vectors[2][0] == 2.0);

  ::setenv("FLOCK_TEST_PROVIDER_KEY", "wrong", 1);
  chat_hits = 0;
  try {
    client.chat_complete({"gpt-4o", "s", "ping", {}, false});
    FAIL("expected fatal");
  } catch (const ProviderError& e) {
    CHECK(e.kind() == ProviderErrorKind::Fatal);
  }
  CHECK(chat_hits == 1);

  ProviderConfig unreachable = cfg;
  unreachable.base_url = "http://127.0.0.1:1/v1";
  unreachable.timeout = std::chrono::milliseconds(500);
  ProviderClient dead(unreachable, make_http_backend(unreachable), [](std::chrono::milliseconds) {});
  try {
    dead.chat_complete({"gpt-4o", "s", "ping", {}, false});
    FAIL("expected transport failure");
  } catch (const ProviderError& e) {
    CHECK(e.kind() == ProviderErrorKind::Transient);
  }

  fake.stop();
  server.join();
}

}  // TEST_SUITE
