#include <random>
#include <set>
#include <string>

#include "doctest.h"
#include "flock/database.hpp"
#include "flock/error.hpp"
#include "flock/explain.hpp"
#include "flock/sql/ask.hpp"
#include "flock/sql/lexer.hpp"
#include "flock/sql/parser.hpp"
#include "support/support.hpp"

using namespace flockmtl;
using namespace flockmtl::sql;
using namespace flocktest;

namespace {

std::string query_text(const std::string& name) { return read_file(fixtures_dir() / "queries" / name); }

const Expr* find_call(const Expr& e, const std::string& name) {
  if (e.kind == ExprKind::Call && e.name == name) return &e;
  for (const auto& a : e.args) {
    if (const auto* hit = find_call(a, name)) return hit;
  }
  return nullptr;
}

struct Loaded {
  TempDir ws;
  std::shared_ptr<MockBackend> mock = make_mock();
  Database db{offline_options(ws.path(), mock)};
  Loaded() {
    db.execute_script(query_text("setup.sql"));
    db.execute_script(query_text("q1.sql"));
  }
};

const PlanNode* find_kind(const LogicalPlan& plan, PlanKind kind) {
  for (const auto* n : plan.nodes()) {
    if (n->kind == kind) return n;
  }
  return nullptr;
}

}  // namespace

TEST_SUITE("sql") {

TEST_CASE("token slices reproduce the source") {
  const std::string src = "SELECT x::DOUBLE[3], 'it''s' -- note\n  FROM t WHERE a <> 1.5e2;";
  auto tokens = tokenize_sql(src);
  REQUIRE(tokens.back().kind == TokenKind::End);
  std::string rebuilt;
  std::size_t pos = 0;
  for (const auto& t : tokens) {
    rebuilt += src.substr(pos, t.offset - pos);  // whitespace and comments
    rebuilt += std::string(t.text);
    pos = t.offset + t.text.size();
  }
  rebuilt += src.substr(pos);
  CHECK(rebuilt == src);
  CHECK(tokens[0].kind == TokenKind::Keyword);
  CHECK(tokens[0].value == "SELECT");
  bool saw_string = false;
  for (const auto& t : tokens) {
    if (t.kind == TokenKind::String) {
      CHECK(t.value == "it's");
      saw_string = true;
    }
    if (t.value == "FROM") CHECK(t.line == 2);
  }
  CHECK(saw_string);
}

TEST_CASE("unterminated string is a syntax error with a position") {
  try {
    tokenize_sql("SELECT 'abc");
    FAIL("expected SyntaxError");
  } catch (const SyntaxError& e) {
    CHECK(e.line() == 1);
    CHECK(e.column() >= 8);
  }
}

TEST_CASE("Query 1 parses into two resource definitions") {
  auto stmts = parse_script(query_text("q1.sql"));
  REQUIRE(stmts.size() == 2);
  const auto& model = std::get<ResourceStmt>(stmts[0]);
  CHECK(model.action == ResourceStmt::Action::Create);
  CHECK(model.kind == ResourceKind::Model);
  CHECK(model.scope == Scope::Global);
  CHECK(model.name == "model-relevance-check");
  CHECK(model.model_id == "gpt-4o-mini");
  CHECK(model.provider == "openai");
  const auto& prompt = std::get<ResourceStmt>(stmts[1]);
  CHECK(prompt.kind == ResourceKind::Prompt);
  CHECK_FALSE(prompt.scope.has_value());
  CHECK(prompt.text == "is related to join algos given abstract");
}

TEST_CASE("Query 2 parses with two CTEs and a three-map llm_filter") {
  auto stmt = std::get<SelectStmt>(parse(query_text("q2.sql")));
  REQUIRE(stmt.ctes.size() == 2);
  CHECK(stmt.ctes[0].name == "relevant_xpapers");
  CHECK(stmt.ctes[1].name == "summarized_Papers");
  REQUIRE(stmt.ctes[0].query->where.has_value());
  const Expr* filter = find_call(*stmt.ctes[0].query->where, "llm_filter");
  REQUIRE(filter != nullptr);
  REQUIRE(filter->args.size() == 3);
  for (const auto& a : filter->args) CHECK(a.kind == ExprKind::Map);
  CHECK(filter->args[2].keys == std::vector<std::string>{"title", "abstract"});
  // The JSON-shaped prompt with braces and newlines stays one string literal.
  const Expr* json_call = find_call(stmt.ctes[1].query->items[3].expr, "llm_complete_json");
  REQUIRE(json_call != nullptr);
  CHECK(json_call->args[1].args[0].literal.as_text().find("\"keywords\"") != std::string::npos);
}

TEST_CASE("unbalanced parenthesis reports line and column") {
  try {
    parse("SELECT * FROM t WHERE (");
    FAIL("expected SyntaxError");
  } catch (const SyntaxError& e) {
    CHECK(e.line() == 1);
    CHECK(e.column() == 24);
    CHECK_FALSE(e.expected().empty());
  }
  try {
    parse("SELECT a\nFROM t\nWHERE a = = 1");
    FAIL("expected SyntaxError");
  } catch (const SyntaxError& e) {
    CHECK(e.line() == 3);
    CHECK(e.column() == 11);
  }
}

TEST_CASE("pretty-printed statements reparse to the same AST") {
  std::vector<std::string> corpus = {query_text("q2.sql"), query_text("q3.sql"),
                                     "SELECT a AS x, -b, NOT c IS NOT NULL FROM t ORDER BY 1 DESC LIMIT 3",
                                     "SELECT k, count(*), sum(v) FROM t GROUP BY k",
                                     "SELECT x::DOUBLE[4], 'a''b' || c FROM t INNER JOIN u ON t.a = u.b",
                                     "CREATE TABLE z AS FROM 'z.csv'",
                                     "CREATE FTS INDEX ON docs (id, body)",
                                     "UPDATE GLOBAL MODEL('m', 'gpt-4o', 'openai', {'temperature': 0.2})",
                                     "DELETE PROMPT('p')",
                                     "ASK 'how many rows?'"};
  for (const auto& stmt : parse_script(query_text("q1.sql"))) corpus.push_back(to_sql(stmt));
  for (const auto& q : corpus) {
    CAPTURE(q);
    Statement first = parse(q);
    std::string printed = to_sql(first);
    CAPTURE(printed);
    CHECK(parse(printed) == first);
  }
}

TEST_CASE("parse is total on random token soups") {
  const std::vector<std::string> pool = {"SELECT", "FROM", "WHERE", "(", ")", ",", "a", "t", "'s'", "1", "2.5",
                                         "{", "}", ":", "=", "<>", "AND", "OR", "NOT", "::", "DOUBLE[3]", "OVER",
                                         "ORDER", "BY", "LIMIT", "JOIN", "ON", "WITH", "AS", "CREATE", "MODEL",
                                         "FULL", "OUTER", "*", ".", ";", "--", "'", "IS", "NULL", "[", "]", "||"};
  std::mt19937_64 rng(99);
  int parsed = 0;
  for (int i = 0; i < 3000; ++i) {
    std::string text;
    int n = std::uniform_int_distribution<int>(0, 14)(rng);
    for (int k = 0; k < n; ++k) text += pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)] + " ";
    try {
      parse_script(text);
      ++parsed;
    } catch (const SyntaxError&) {
    } catch (const std::exception& e) {
      FAIL("non-syntax failure on '" << text << "': " << e.what());
    }
  }
  CHECK(parsed > 0);
}

TEST_CASE("Query 2 plan: llm_filter reads the scan and feeds the filter") {
  Loaded env;
  auto plan = env.db.plan(query_text("q2.sql"));
  const PlanNode* filter = find_kind(plan, PlanKind::Filter);
  REQUIRE(filter != nullptr);
  REQUIRE(filter->children.size() == 1);
  const PlanNode* llm = filter->children[0].get();
  CHECK(llm->kind == PlanKind::LlmScalar);
  CHECK(llm->llm->call.kind == FunctionKind::Filter);
  CHECK(llm->llm->call.prompt_text == "is related to join algos given abstract");
  CHECK(llm->llm->call.model.model_id == "gpt-4o-mini");
  REQUIRE(llm->children.size() == 1);
  CHECK(llm->children[0]->kind == PlanKind::Scan);
  CHECK(llm->children[0]->name == "research_papers");
  auto names = plan.output_names();
  REQUIRE(names.size() == 4);
  CHECK(names[0] == "id");
  CHECK(names[1] == "title");
  CHECK(names[2] == "summarized_abstract");
}

TEST_CASE("Query 3 plan: full outer join on idx, window max, fusion sort key") {
  Loaded env;
  auto plan = env.db.plan(query_text("q3.sql"));
  const PlanNode* join = find_kind(plan, PlanKind::Join);
  REQUIRE(join != nullptr);
  CHECK(join->join_type == JoinType::FullOuter);
  CHECK(join->join_keys.size() == 1);
  int windows = 0;
  bool fusion_sort = false;
  for (const auto* n : plan.nodes()) {
    if (n->kind == PlanKind::Window) {
      ++windows;
      for (const auto& a : n->aggregates) CHECK(a.function == "max");
    }
    if (n->kind == PlanKind::Sort) {
      for (const auto& k : n->sort_keys) fusion_sort |= k.expr.kind == BoundExpr::Kind::Call && k.expr.op == "fusion";
    }
  }
  CHECK(windows >= 1);
  CHECK(fusion_sort);
  CHECK(find_kind(plan, PlanKind::FtsMatch) != nullptr);
  CHECK(find_kind(plan, PlanKind::LlmAggregate) != nullptr);
}

TEST_CASE("binding errors") {
  Loaded env;
  auto code_of = [&](const std::string& sql) {
    try {
      env.db.plan(sql);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::ExecError;
  };
  CHECK(code_of("SELECT llm_complete({'model': 'gpt-4o'}, {'prompt_name': 'missing'}, {'t': title}) FROM "
                "research_papers") == ErrorCode::UnknownResource);
  CHECK(code_of("SELECT llm_complete({'model_name': 'nope'}, {'prompt': 'x'}, {'t': title}) FROM research_papers") ==
        ErrorCode::UnknownResource);
  CHECK(code_of("SELECT id FROM research_papers WHERE llm_reduce({'model': 'gpt-4o'}, {'prompt': 'x'}, "
                "{'t': title}) = 'a'") == ErrorCode::MisplacedAggregate);
  CHECK(code_of("SELECT nope FROM research_papers") == ErrorCode::BindingError);
  CHECK(code_of("SELECT id FROM nowhere") == ErrorCode::BindingError);
  CHECK(code_of("SELECT llm_complete({'model': 'gpt-4o'}, {'prompt': 'x'}, {'t': title, 't': abstract}) FROM "
                "research_papers") == ErrorCode::SyntaxError);
}

TEST_CASE("plans are deterministic") {
  Loaded env;
  for (const char* name : {"q2.sql", "q3.sql"}) {
    std::string sql = query_text(name);
    Json a = export_plan(env.db.plan(sql), nullptr, {}, sql);
    Json b = export_plan(env.db.plan(sql), nullptr, {}, sql);
    CHECK(a == b);
  }
}

TEST_CASE("catalog references pin versions") {
  Loaded env;
  env.db.execute("UPDATE PROMPT('joins-prompt', 'second wording')");
  auto plan = env.db.plan(
      "SELECT llm_filter({'model_name': 'model-relevance-check'}, {'prompt_name': 'joins-prompt', 'version': 1}, "
      "{'t': title}) FROM research_papers");
  CHECK(find_kind(plan, PlanKind::LlmScalar)->llm->call.prompt_text == "is related to join algos given abstract");
  auto latest = env.db.plan(
      "SELECT llm_filter({'model_name': 'model-relevance-check'}, {'prompt_name': 'joins-prompt'}, "
      "{'t': title}) FROM research_papers");
  CHECK(find_kind(latest, PlanKind::LlmScalar)->llm->call.prompt_text == "second wording");
}

TEST_CASE("extract_sql strips fences and a trailing semicolon") {
  CHECK(extract_sql("```sql\nSELECT 1;\n```") == "SELECT 1");
  CHECK(extract_sql("  SELECT a FROM t ; ") == "SELECT a FROM t");
}

TEST_CASE("ASK generation with a scripted model") {
  auto mock = make_mock();
  ProviderConfig cfg;
  cfg.provider_id = "mock";
  ProviderClient client(cfg, mock, [](std::chrono::milliseconds) {});
  ModelResource model;
  model.name = "gpt-4o";
  model.model_id = "gpt-4o";
  model.provider_id = "mock";
  model.context_window_tokens = 128000;
  model.max_output_tokens = 1000;
  const std::string schema = schema_ddl({{"bank_reviews", {{"id", ValueType::Int}, {"review", ValueType::Text}}}});
  const std::string good =
      "SELECT id, review, llm_complete({'model': 'gpt-4o'}, {'prompt': 'Rate severity 1-5'}, {'review': review}) "
      "AS severity FROM bank_reviews WHERE llm_filter({'model': 'gpt-4o'}, {'prompt': 'mentions a technical issue'}, "
      "{'review': review})";

  SUBCASE("valid on first try") {
    mock->script(mock::any(), {MockReply::text("```sql\n" + good + ";\n```")});
    auto r = generate_ask_sql("list reviews mentioning technical issues and assign a severity score to each issue",
                              schema, model, client);
    CHECK(r.attempts == 1);
    CHECK(r.sql == good);
    auto fns = referenced_functions(r.statement);
    CHECK(std::find(fns.begin(), fns.end(), "llm_filter") != fns.end());
    for (const auto& f : fns) CHECK(find_function(f) != nullptr);
    auto req = mock->request_log().at(0);
    CHECK(req.system_text.find("CREATE TABLE bank_reviews") != std::string::npos);
    CHECK(req.system_text.find("llm_filter") != std::string::npos);
    CHECK(req.user_text.find("severity score") != std::string::npos);
  }
  SUBCASE("garbage then valid") {
    mock->script(mock::any(), {MockReply::text("I think you want SELEC * FRM"), MockReply::text(good)});
    auto r = generate_ask_sql("technical issues?", schema, model, client);
    CHECK(r.attempts == 2);
    CHECK(mock->request_log().at(1).user_text.find("previous answer was rejected") != std::string::npos);
  }
  SUBCASE("garbage twice") {
    mock->script(mock::any(), {MockReply::text("no idea"), MockReply::text("still no idea")});
    try {
      generate_ask_sql("technical issues?", schema, model, client);
      FAIL("expected GenerationFailed");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::GenerationFailed);
    }
    CHECK(mock->chat_calls() == 2);
  }
  SUBCASE("unknown function is rejected") {
    mock->script(mock::any(), {MockReply::text("SELECT llm_magic(review) FROM bank_reviews"), MockReply::text(good)});
    auto r = generate_ask_sql("technical issues?", schema, model, client);
    CHECK(r.attempts == 2);
  }
  SUBCASE("provider errors pass through") {
    mock->script(mock::any(), {MockReply::error(ProviderErrorKind::Fatal)});
    CHECK_THROWS_AS(generate_ask_sql("q", schema, model, client), ProviderError);
  }
}

}  // TEST_SUITE
