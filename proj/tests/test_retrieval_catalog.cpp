#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "flock/catalog.hpp"
#include "flock/database.hpp"
#include "flock/error.hpp"
#include "flock/functions.hpp"
#include "flock/retrieval.hpp"
#include "support/support.hpp"

using namespace flockmtl;
using namespace flocktest;

namespace {

using Docs = std::vector<std::pair<std::string, std::string>>;

InvertedIndex index_of(const std::vector<std::string>& texts) {
  Docs docs;
  for (std::size_t i = 0; i < texts.size(); ++i) docs.emplace_back("d" + std::to_string(i), texts[i]);
  return InvertedIndex::build(docs);
}

std::vector<std::string> random_corpus(std::mt19937_64& rng, std::size_t n) {
  static const std::vector<std::string> vocab = {"join", "hash", "sort", "merge", "cyclic", "query", "index",
                                                 "tree", "graph", "plan", "cost", "model", "cache", "batch"};
  std::vector<std::string> docs;
  for (std::size_t i = 0; i < n; ++i) {
    std::string d;
    int len = std::uniform_int_distribution<int>(0, 25)(rng);
    for (int k = 0; k < len; ++k) {
      const auto& w = vocab[std::uniform_int_distribution<std::size_t>(0, vocab.size() - 1)(rng)];
      d += (k % 4 == 0 ? w : (k % 4 == 1 ? std::string(1, static_cast<char>(std::toupper(w[0]))) + w.substr(1) : w));
      d += k % 3 == 0 ? ", " : " ";
    }
    docs.push_back(d);
  }
  return docs;
}

std::shared_ptr<const ProviderRegistry> registry() {
  static auto reg =
      std::make_shared<const ProviderRegistry>(ProviderRegistry::load(source_dir() / "config" / "providers.json"));
  return reg;
}

struct Stores {
  TempDir dir;
  std::filesystem::path local = dir.path() / "ws" / ".flock" / "catalog.json";
  std::filesystem::path global = dir.path() / "global" / "catalog.json";
  Catalog open() const { return Catalog(local, global, registry()); }
};

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::ExecError;
}

const PromptDefinition kJoins{"joins-prompt", "is related to join algos given abstract"};
const ModelDefinition kRelevance{"model-relevance-check", "gpt-4o-mini", "openai", {}};

}  // namespace

TEST_SUITE("retrieval_catalog") {

// ---- BM25 --------------------------------------------------------------------------

TEST_CASE("tokenizer and postings") {
  CHECK(tokenize("Join, JOIN join!") == std::vector<std::string>{"join", "join", "join"});
  CHECK(tokenize("  --  ").empty());
  auto idx = index_of({"join algorithms", "hash join", "sorting"});
  const auto& p = idx.postings("join");
  REQUIRE(p.size() == 2);
  for (const auto& post : p) CHECK(post.tf == 1);
  CHECK(idx.postings("absent").empty());
  CHECK(index_of({"Join, JOIN join!"}).postings("join").at(0).tf == 3);
  CHECK_THROWS_AS(InvertedIndex::build({{"a", "x"}, {"a", "y"}}), Error);
}

TEST_CASE("empty index scores nothing") {
  auto idx = InvertedIndex::build({});
  CHECK(idx.doc_count() == 0);
  CHECK(idx.match("join").empty());
}

TEST_CASE("BM25 single-term example against a hand evaluation") {
  auto idx = index_of({"join algorithms", "hash tables", "sorting networks"});
  auto scores = idx.match("join");
  REQUIRE(scores.size() == 1);
  // N = 3, df = 1, tf = 1, len = 2, avgdl = 2.
  const double idf = std::log(1.0 + (3 - 1 + 0.5) / (1 + 0.5));
  const double expected = idf * (1 * 2.2) / (1 + 1.2 * (1 - 0.75 + 0.75 * 2.0 / 2.0));
  CHECK(std::abs(scores.at("d0") - expected) < 1e-9);
  CHECK(idx.match("quantum").empty());
  auto twins = index_of({"join order", "join order", "other words"});
  auto t = twins.match("join order");
  CHECK(t.at("d0") == t.at("d1"));
}

TEST_CASE("BM25 agrees with the naive scorer on random corpora") {
  std::mt19937_64 rng(1234);
  const std::vector<std::string> queries = {"join",        "hash join",   "cyclic join join", "tree graph plan",
                                            "nothing here", "Cache BATCH", "model, cost"};
  for (int trial = 0; trial < 40; ++trial) {
    auto corpus = random_corpus(rng, 50);
    auto idx = index_of(corpus);
    std::size_t total = 0;
    for (std::size_t i = 0; i < corpus.size(); ++i) total += idx.doc_length("d" + std::to_string(i));
    CHECK(idx.average_doc_length() == doctest::Approx(static_cast<double>(total) / corpus.size()));
    for (const auto& q : queries) {
      auto oracle = naive_bm25(corpus, q);
      auto got = idx.match(q);
      for (std::size_t i = 0; i < corpus.size(); ++i) {
        auto it = got.find("d" + std::to_string(i));
        if (!oracle[i]) {
          CHECK(it == got.end());
        } else {
          REQUIRE(it != got.end());
          CHECK(std::abs(it->second - *oracle[i]) < 1e-9);
        }
      }
    }
  }
}

std::vector<std::string> ranking(const std::unordered_map<std::string, double>& scores) {
  std::vector<std::pair<double, std::string>> v;
  for (const auto& [k, x] : scores) v.emplace_back(-x, k);
  std::sort(v.begin(), v.end());
  std::vector<std::string> out;
  for (auto& e : v) out.push_back(e.second);
  return out;
}

TEST_CASE("idf is non-negative") {
  for (std::size_t n = 0; n <= 30; ++n) {
    for (std::size_t df = 0; df <= n; ++df) CHECK(std::log(1.0 + (n - df + 0.5) / (df + 0.5)) >= 0);
  }
  std::mt19937_64 rng(78);
  auto idx = index_of(random_corpus(rng, 20));
  for (const auto& term : {"join", "hash", "absent"}) CHECK(idx.idf(term) >= 0);
}

TEST_CASE("an irrelevant document that keeps avgdl keeps single-term rankings") {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 30; ++trial) {
    auto corpus = random_corpus(rng, 20);
    std::size_t total = 0;
    for (const auto& d : corpus) total += tokenize(d).size();
    while (total % corpus.size() != 0) {
      corpus.back() += " filler";
      ++total;
    }
    std::string unrelated;
    for (std::size_t i = 0; i < total / corpus.size(); ++i) unrelated += "zzz ";
    auto extended = corpus;
    extended.push_back(unrelated);
    for (const auto& term : {"cyclic", "join", "tree"}) {
      auto before = index_of(corpus).match(term), after = index_of(extended).match(term);
      REQUIRE(before.size() == after.size());
      // Pairwise order; integer tf/length combinations can tie exactly, and ties may round either way.
      for (const auto& [x, sx] : before) {
        for (const auto& [y, sy] : before) {
          if (sx > sy * (1 + 1e-9)) CHECK(after.at(x) > after.at(y));
        }
      }
    }
  }
}

TEST_CASE("a long irrelevant document can reorder single-term rankings") {
  // tf 2 in a long doc against tf 1 in a short doc: the winner depends on avgdl.
  std::string long_doc = "cyclic cyclic";
  for (int i = 0; i < 38; ++i) long_doc += " pad";
  std::vector<std::string> corpus = {long_doc, "cyclic x y z"};
  CHECK(ranking(index_of(corpus).match("cyclic")) == std::vector<std::string>{"d1", "d0"});
  std::string huge;
  for (int i = 0; i < 500; ++i) huge += "other ";
  corpus.push_back(huge);
  CHECK(ranking(index_of(corpus).match("cyclic")) == std::vector<std::string>{"d0", "d1"});
}

TEST_CASE("match_bm25 in SQL") {
  TempDir ws;
  Database db(offline_options(ws.path(), make_mock()));
  db.execute_script(read_file(fixtures_dir() / "queries" / "setup.sql"));
  auto res = db.execute(
      "SELECT idx, fts_main_research_passages.match_bm25(idx, 'cyclic joins', fields:='content') AS s FROM "
      "research_passages");
  const Table& t = *db.table("research_passages");
  std::vector<std::string> texts;
  for (std::size_t i = 0; i < t.row_count(); ++i) texts.push_back(t.at(i, 1).as_text());
  auto oracle = naive_bm25(texts, "cyclic joins");
  REQUIRE(res.rows.size() == texts.size());
  int matched = 0;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    CHECK(res.rows[i][0] == t.at(i, 0));
    if (!oracle[i]) {
      CHECK(res.rows[i][1].is_null());
    } else {
      ++matched;
      CHECK(std::abs(res.rows[i][1].as_double() - *oracle[i]) < 1e-9);
    }
  }
  CHECK(matched > 0);
  CHECK(code_of([&] { db.create_fts_index("research_passages", "nope", "content"); }) == ErrorCode::BindingError);
}

// ---- cosine ------------------------------------------------------------------------

TEST_CASE("cosine similarity examples and errors") {
  std::vector<double> a = {0.3, -1.2, 4.0};
  CHECK(cosine_similarity(a, a) == doctest::Approx(1.0));
  CHECK(cosine_similarity(std::vector<double>{1, 0}, std::vector<double>{0, 1}) == doctest::Approx(0.0));
  CHECK(code_of([] { cosine_similarity(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2, 3, 4}); }) ==
        ErrorCode::DimensionMismatch);
  CHECK(code_of([] { cosine_similarity(std::vector<double>{0, 0}, std::vector<double>{1, 2}); }) ==
        ErrorCode::ZeroVector);
}

TEST_CASE("cosine is symmetric, scale-invariant, bounded") {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> g(0, 1);
  for (int i = 0; i < 500; ++i) {
    std::size_t dim = std::uniform_int_distribution<std::size_t>(1, 16)(rng);
    std::vector<double> a(dim), b(dim);
    for (auto& x : a) x = g(rng);
    for (auto& x : b) x = g(rng);
    double s = cosine_similarity(a, b);
    CHECK(std::abs(s - naive_cosine(a, b)) < 1e-12);
    CHECK(std::abs(s - cosine_similarity(b, a)) < 1e-12);
    double lambda = std::uniform_real_distribution<double>(0.01, 100)(rng);
    std::vector<double> scaled = a;
    for (auto& x : scaled) x *= lambda;
    CHECK(std::abs(s - cosine_similarity(scaled, b)) < 1e-12);
    CHECK(s <= 1 + 1e-12);
    CHECK(s >= -1 - 1e-12);
  }
}

// ---- fusion ------------------------------------------------------------------------

TEST_CASE("fusion examples") {
  std::vector<std::optional<double>> pair = {0.8, 0.6};
  CHECK(*fusion(FusionMethod::CombSum, pair) == doctest::Approx(1.4));
  std::vector<std::optional<double>> ranks = {1.0, 2.0};
  CHECK(std::abs(*fusion(FusionMethod::Rrf, ranks) - (1.0 / 61 + 1.0 / 62)) < 1e-15);
  std::vector<std::optional<double>> one_missing = {0.8, std::nullopt};
  CHECK(*fusion(FusionMethod::CombMnz, one_missing) == doctest::Approx(0.8));
  std::vector<std::optional<double>> none = {std::nullopt, std::nullopt};
  for (auto m : {FusionMethod::Rrf, FusionMethod::CombSum, FusionMethod::CombMnz, FusionMethod::CombMed,
                 FusionMethod::CombAnz}) {
    CHECK_FALSE(fusion(m, none).has_value());
  }
  std::vector<std::optional<double>> bad = {0.5};
  CHECK(code_of([&] { fusion(FusionMethod::Rrf, bad); }) == ErrorCode::DomainError);
  CHECK(parse_fusion_method("combmnz") == FusionMethod::CombMnz);
  CHECK_FALSE(parse_fusion_method("borda").has_value());
}

TEST_CASE("fusion matches the brute-force oracle") {
  std::mt19937_64 rng(8080);
  const std::vector<std::pair<FusionMethod, std::string>> methods = {{FusionMethod::Rrf, "rrf"},
                                                                     {FusionMethod::CombSum, "combsum"},
                                                                     {FusionMethod::CombMnz, "combmnz"},
                                                                     {FusionMethod::CombMed, "combmed"},
                                                                     {FusionMethod::CombAnz, "combanz"}};
  for (int i = 0; i < 1000; ++i) {
    std::size_t n = std::uniform_int_distribution<std::size_t>(1, 5)(rng);
    std::vector<std::optional<double>> scores(n), ranks(n);
    for (std::size_t k = 0; k < n; ++k) {
      if (std::uniform_int_distribution<int>(0, 4)(rng) == 0) continue;
      scores[k] = std::uniform_int_distribution<int>(0, 5)(rng) == 0 ? 0.0
                                                                      : std::uniform_real_distribution<double>(0, 1)(rng);
      ranks[k] = static_cast<double>(std::uniform_int_distribution<int>(1, 100)(rng));
    }
    for (const auto& [m, name] : methods) {
      const auto& in = m == FusionMethod::Rrf ? ranks : scores;
      auto got = fusion(m, in);
      auto want = brute_fusion(name, in);
      REQUIRE(got.has_value() == want.has_value());
      if (got) CHECK(std::abs(*got - *want) < 1e-12);

      auto shuffled = in;
      std::shuffle(shuffled.begin(), shuffled.end(), rng);
      auto again = fusion(m, shuffled);
      if (got) CHECK(std::abs(*got - *again) < 1e-12);
    }
  }
}

TEST_CASE("RRF is strictly decreasing in each rank") {
  for (double r = 1; r < 200; ++r) {
    std::vector<std::optional<double>> a = {r, 5.0}, b = {r + 1, 5.0};
    CHECK(*fusion(FusionMethod::Rrf, a) > *fusion(FusionMethod::Rrf, b));
  }
}

TEST_CASE("fusion in SQL: generic form is COMBSUM") {
  TempDir ws;
  Database db(offline_options(ws.path(), make_mock()));
  auto r = db.execute("SELECT fusion(0.8, 0.6), fusion_rrf(1, 2), fusion_combmnz(0.8, NULL), fusion_combmed(0.1, 0.9, "
                      "0.5), fusion_combanz(0.2, NULL, 0.4)");
  const auto& row = r.rows.at(0);
  CHECK(row[0].as_double() == doctest::Approx(1.4));
  CHECK(row[1].as_double() == doctest::Approx(1.0 / 61 + 1.0 / 62));
  CHECK(row[2].as_double() == doctest::Approx(0.8));
  CHECK(row[3].as_double() == doctest::Approx(0.5));
  CHECK(row[4].as_double() == doctest::Approx(0.3));
}

// ---- catalog -----------------------------------------------------------------------

TEST_CASE("create: scopes, versions, duplicates") {
  Stores s;
  auto cat = s.open();
  auto model = std::get<ModelResource>(cat.create(Scope::Global, kRelevance));
  CHECK(model.version == 1);
  CHECK(model.scope == Scope::Global);
  CHECK(model.context_window_tokens == 128000);
  CHECK(std::filesystem::exists(s.global));
  auto prompt = std::get<PromptResource>(cat.create(Scope::Local, kJoins));
  CHECK(prompt.version == 1);
  CHECK(std::filesystem::exists(s.local));
  CHECK(code_of([&] { cat.create(Scope::Local, kJoins); }) == ErrorCode::DuplicateResource);
  cat.create(Scope::Global, kJoins);  // other scope is fine
  CHECK(code_of([&] { cat.create(Scope::Local, PromptDefinition{"empty", ""}); }) == ErrorCode::InvalidDefinition);
  CHECK(code_of([&] { cat.create(Scope::Local, ModelDefinition{"m", "x", "nowhere", {}}); }) ==
        ErrorCode::InvalidDefinition);
  CHECK(code_of([&] { cat.create(Scope::Local, PromptDefinition{"bad name!", "x"}); }) ==
        ErrorCode::InvalidDefinition);
  CHECK(cat.resolve_model("model-relevance-check") == model);
}

TEST_CASE("update keeps old versions; resolve pins them") {
  Stores s;
  auto cat = s.open();
  cat.create(Scope::Local, kJoins);
  auto v2 = std::get<PromptResource>(cat.update(PromptDefinition{"joins-prompt", "mentions join algorithms"}));
  CHECK(v2.version == 2);
  CHECK(cat.resolve_prompt("joins-prompt").version == 2);
  CHECK(cat.resolve_prompt("joins-prompt", 1).text == kJoins.text);
  CHECK(code_of([&] { cat.resolve_prompt("joins-prompt", 7); }) == ErrorCode::VersionNotFound);
  CHECK(code_of([&] { cat.update(PromptDefinition{"nope", "x"}); }) == ErrorCode::NotFound);
  CHECK(code_of([&] { cat.resolve_prompt("nope"); }) == ErrorCode::NotFound);
  cat.update(PromptDefinition{"joins-prompt", "v3"});
  cat.update(PromptDefinition{"joins-prompt", "v4"});
  std::vector<int> versions;
  for (const auto& r : cat.list(ResourceKind::Prompt)) versions.push_back(record_version(r));
  std::sort(versions.begin(), versions.end());
  CHECK(versions == std::vector<int>{1, 2, 3, 4});
}

TEST_CASE("LOCAL shadows GLOBAL; delete counts versions") {
  Stores s;
  auto cat = s.open();
  cat.create(Scope::Global, PromptDefinition{"p", "global text"});
  cat.create(Scope::Local, PromptDefinition{"p", "local text"});
  auto r = cat.resolve_prompt("p");
  CHECK(r.scope == Scope::Local);
  CHECK(r.text == "local text");
  cat.update(PromptDefinition{"p", "local v2"});
  CHECK(cat.remove(ResourceKind::Prompt, "p", Scope::Local) == 2);
  CHECK(cat.resolve_prompt("p").scope == Scope::Global);
  CHECK(cat.remove(ResourceKind::Prompt, "p", Scope::Local) == 0);
  CHECK(cat.remove(ResourceKind::Prompt, "p", Scope::Global) == 1);
  CHECK(code_of([&] { cat.resolve_prompt("p"); }) == ErrorCode::NotFound);
}

TEST_CASE("records round-trip through JSON") {
  Stores s;
  auto cat = s.open();
  ModelDefinition def{"tuned", "gpt-4o", "openai", {}};
  def.params.temperature = 0.25;
  auto rec = cat.create(Scope::Local, def);
  CHECK(record_from_json(record_to_json(rec)) == rec);
  auto p = cat.create(Scope::Global, kJoins);
  CHECK(record_from_json(record_to_json(p)) == p);
}

TEST_CASE("persistence round-trip over random operation sequences") {
  std::mt19937_64 rng(2024);
  const std::vector<std::string> names = {"a", "b", "c"};
  for (int trial = 0; trial < 30; ++trial) {
    Stores s;
    auto cat = s.open();
    for (int step = 0; step < 25; ++step) {
      const auto& name = names[std::uniform_int_distribution<std::size_t>(0, 2)(rng)];
      Scope scope = std::uniform_int_distribution<int>(0, 1)(rng) ? Scope::Local : Scope::Global;
      bool is_model = std::uniform_int_distribution<int>(0, 1)(rng);
      ResourceDefinition def = is_model ? ResourceDefinition(ModelDefinition{name, "gpt-4o", "openai", {}})
                                        : ResourceDefinition(PromptDefinition{name, "text " + std::to_string(step)});
      switch (std::uniform_int_distribution<int>(0, 2)(rng)) {
        case 0:
          try {
            cat.create(scope, def);
          } catch (const Error&) {
          }
          break;
        case 1:
          try {
            cat.update(def);
          } catch (const Error&) {
          }
          break;
        default:
          cat.remove(is_model ? ResourceKind::Model : ResourceKind::Prompt, name, scope);
      }
    }
    auto reopened = s.open();
    for (auto kind : {ResourceKind::Model, ResourceKind::Prompt}) {
      auto before = cat.list(kind), after = reopened.list(kind);
      CHECK(before == after);
      for (const auto& name : names) {
        std::optional<ResourceRecord> x, y;
        try {
          x = cat.resolve(kind, name);
        } catch (const Error&) {
        }
        try {
          y = reopened.resolve(kind, name);
        } catch (const Error&) {
        }
        CHECK(x == y);
        if (x) {
          CHECK(cat.resolve(kind, name, record_version(*x)) == *x);
          // versions per (name, scope) are exactly 1..N
          std::vector<int> v;
          for (const auto& r : before) {
            if (record_name(r) == name && record_scope(r) == record_scope(*x)) v.push_back(record_version(r));
          }
          std::sort(v.begin(), v.end());
          for (std::size_t i = 0; i < v.size(); ++i) CHECK(v[i] == static_cast<int>(i + 1));
        }
      }
    }
  }
}

TEST_CASE("catalog DDL and introspection through SQL") {
  TempDir ws;
  Database db(offline_options(ws.path(), make_mock()));
  db.execute_script(read_file(fixtures_dir() / "queries" / "q1.sql"));
  CHECK(db.catalog().resolve_model("model-relevance-check").scope == Scope::Global);
  CHECK(db.catalog().resolve_prompt("joins-prompt").scope == Scope::Local);
  db.execute("UPDATE PROMPT('joins-prompt', 'second')");
  auto prompts = db.execute("SELECT * FROM flock_prompts()");
  CHECK(prompts.rows.size() == 2);
  auto models = db.execute("SELECT * FROM flock_models()");
  CHECK(models.rows.size() == 1);
  db.execute("DELETE PROMPT('joins-prompt')");
  CHECK(db.execute("SELECT * FROM flock_prompts()").rows.empty());
  CHECK(code_of([&] { db.execute("CREATE GLOBAL MODEL('model-relevance-check', 'gpt-4o', 'openai')"); }) ==
        ErrorCode::DuplicateResource);

  // A second database on the same machine sees the GLOBAL model but not the LOCAL prompt.
  TempDir other;
  auto opts = offline_options(other.path(), make_mock());
  opts.global_catalog = ws.path() / "global" / "catalog.json";
  Database second(opts);
  CHECK(second.catalog().resolve_model("model-relevance-check").model_id == "gpt-4o-mini");
}

}  // TEST_SUITE
