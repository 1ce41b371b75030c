#include "support.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#ifndef FLOCK_SOURCE_DIR
#define FLOCK_SOURCE_DIR "."
#endif

namespace fs = std::filesystem;
using namespace flockmtl;

namespace flocktest {

TempDir::TempDir() {
  std::random_device rd;
  std::ostringstream name;
  name << "flocktest-" << std::hex << rd() << rd();
  path_ = fs::temp_directory_path() / name.str();
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

fs::path source_dir() { return FLOCK_SOURCE_DIR; }
fs::path fixtures_dir() { return source_dir() / "fixtures"; }

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::shared_ptr<MockBackend> make_mock() {
  auto registry = std::make_shared<ProviderRegistry>(ProviderRegistry::load(source_dir() / "config/providers.json"));
  return std::make_shared<MockBackend>(registry);
}

DatabaseOptions offline_options(const fs::path& workspace, std::shared_ptr<MockBackend> mock) {
  DatabaseOptions o;
  o.workspace = workspace;
  o.data_dir = fixtures_dir();
  o.providers_file = source_dir() / "config/providers.json";
  o.global_catalog = workspace / "global" / "catalog.json";
  o.cache_dir = workspace / ".flock" / "cache";
  o.route_all_to_mock = true;
  o.mock = mock ? std::move(mock) : make_mock();
  o.sleeper = [](std::chrono::milliseconds) {};
  return o;
}

// ---- oracles ------------------------------------------------------------------------

std::vector<std::string> naive_tokens(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    unsigned char c = static_cast<unsigned char>(ch);
    bool word = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9');
    if (word) {
      cur += static_cast<char>(std::tolower(c));
    } else if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

std::vector<std::optional<double>> naive_bm25(const std::vector<std::string>& docs, const std::string& query,
                                              double k1, double b) {
  std::vector<std::vector<std::string>> toks;
  double total = 0;
  for (const auto& d : docs) {
    toks.push_back(naive_tokens(d));
    total += static_cast<double>(toks.back().size());
  }
  const double n = static_cast<double>(docs.size());
  const double avgdl = docs.empty() ? 0.0 : total / n;
  std::vector<std::string> terms;
  for (const auto& t : naive_tokens(query)) {
    if (std::find(terms.begin(), terms.end(), t) == terms.end()) terms.push_back(t);
  }
  std::vector<std::optional<double>> scores(docs.size());
  for (std::size_t d = 0; d < docs.size(); ++d) {
    double score = 0;
    bool hit = false;
    for (const auto& t : terms) {
      double tf = static_cast<double>(std::count(toks[d].begin(), toks[d].end(), t));
      if (tf == 0) continue;
      hit = true;
      double df = 0;
      for (const auto& other : toks) df += std::find(other.begin(), other.end(), t) != other.end() ? 1 : 0;
      double idf = std::log(1.0 + (n - df + 0.5) / (df + 0.5));
      double len = static_cast<double>(toks[d].size());
      score += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * len / avgdl));
    }
    if (hit) scores[d] = score;
  }
  return scores;
}

std::optional<double> brute_fusion(const std::string& method, const std::vector<std::optional<double>>& inputs) {
  std::vector<double> present;
  for (const auto& x : inputs) {
    if (x) present.push_back(*x);
  }
  if (present.empty()) return std::nullopt;
  if (method == "rrf") {
    double s = 0;
    for (double r : present) s += 1.0 / (60.0 + r);
    return s;
  }
  double sum = 0;
  for (double x : present) sum += x;
  if (method == "combsum") return sum;
  if (method == "combmnz") {
    int positive = 0;
    for (double x : present) positive += x > 0 ? 1 : 0;
    return sum * positive;
  }
  if (method == "combanz") return sum / static_cast<double>(present.size());
  if (method == "combmed") {
    std::sort(present.begin(), present.end());
    std::size_t m = present.size();
    return m % 2 == 1 ? present[m / 2] : (present[m / 2 - 1] + present[m / 2]) / 2.0;
  }
  return std::nullopt;
}

double naive_cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

// ---- reference interpreter -----------------------------------------------------------

namespace {

const char* kColumnNames[] = {"a", "b", "c", "s", "k", "v"};

Value maybe_null(std::mt19937_64& rng, Value v) {
  return std::uniform_int_distribution<int>(0, 99)(rng) < 15 ? Value::null() : v;
}

int pick(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

bool chance(std::mt19937_64& rng, int percent) { return pick(rng, 0, 99) < percent; }

std::string render(const RefExpr& e) {
  switch (e.kind) {
    case RefExpr::Kind::Column:
      return kColumnNames[e.column];
    case RefExpr::Kind::Constant:
      if (e.constant.type() == ValueType::Text) return "'" + e.constant.as_text() + "'";
      return std::to_string(e.constant.as_int());
    case RefExpr::Kind::Add:
      return "(" + render(e.args[0]) + " + " + render(e.args[1]) + ")";
    case RefExpr::Kind::Sub:
      return "(" + render(e.args[0]) + " - " + render(e.args[1]) + ")";
    case RefExpr::Kind::Compare:
      return "(" + render(e.args[0]) + " " + e.op + " " + render(e.args[1]) + ")";
    case RefExpr::Kind::IsNull:
      return "(" + render(e.args[0]) + (e.negated ? " IS NOT NULL)" : " IS NULL)");
    case RefExpr::Kind::And:
      return "(" + render(e.args[0]) + " AND " + render(e.args[1]) + ")";
    case RefExpr::Kind::Or:
      return "(" + render(e.args[0]) + " OR " + render(e.args[1]) + ")";
    case RefExpr::Kind::Not:
      return "(NOT " + render(e.args[0]) + ")";
  }
  return "";
}

RefExpr column(std::size_t i) {
  RefExpr e;
  e.kind = RefExpr::Kind::Column;
  e.column = i;
  return e;
}

RefExpr constant(Value v) {
  RefExpr e;
  e.kind = RefExpr::Kind::Constant;
  e.constant = std::move(v);
  return e;
}

RefExpr node(RefExpr::Kind kind, std::vector<RefExpr> args, std::string op = {}) {
  RefExpr e;
  e.kind = kind;
  e.args = std::move(args);
  e.op = std::move(op);
  return e;
}

RefExpr random_predicate(std::mt19937_64& rng, bool joined, int depth) {
  static const char* ops[] = {"=", "<>", "<", "<=", ">", ">="};
  std::vector<std::size_t> numeric = {0, 1, 2};
  if (joined) {
    numeric.push_back(4);
    numeric.push_back(5);
  }
  if (depth > 0 && chance(rng, 45)) {
    int which = pick(rng, 0, 2);
    if (which == 2) return node(RefExpr::Kind::Not, {random_predicate(rng, joined, depth - 1)});
    return node(which == 0 ? RefExpr::Kind::And : RefExpr::Kind::Or,
                {random_predicate(rng, joined, depth - 1), random_predicate(rng, joined, depth - 1)});
  }
  switch (pick(rng, 0, 4)) {
    case 0: {
      RefExpr sum = node(RefExpr::Kind::Add, {column(0), column(1)});
      return node(RefExpr::Kind::Compare, {sum, constant(Value::integer(pick(rng, -2, 10)))}, ops[pick(rng, 0, 5)]);
    }
    case 1: {
      RefExpr diff = node(RefExpr::Kind::Sub, {column(2), column(numeric[pick(rng, 0, 1)])});
      return node(RefExpr::Kind::Compare, {diff, constant(Value::integer(pick(rng, -3, 3)))}, ops[pick(rng, 0, 5)]);
    }
    case 2: {
      std::string letter(1, static_cast<char>('x' + pick(rng, 0, 2)));
      return node(RefExpr::Kind::Compare, {column(3), constant(Value::text(letter))}, ops[pick(rng, 0, 5)]);
    }
    case 3: {
      RefExpr e = node(RefExpr::Kind::IsNull, {column(static_cast<std::size_t>(pick(rng, 0, joined ? 5 : 3)))});
      e.negated = chance(rng, 50);
      return e;
    }
    default: {
      std::size_t col = numeric[static_cast<std::size_t>(pick(rng, 0, static_cast<int>(numeric.size()) - 1))];
      return node(RefExpr::Kind::Compare, {column(col), constant(Value::integer(pick(rng, -2, 6)))},
                  ops[pick(rng, 0, 5)]);
    }
  }
}

// Three-valued truth: -1 unknown, 0 false, 1 true.
int truth(const Value& v) {
  if (v.is_null()) return -1;
  return v.as_bool() ? 1 : 0;
}

Value from_truth(int t) { return t < 0 ? Value::null() : Value::boolean(t == 1); }

double num(const Value& v) {
  return v.type() == ValueType::Int ? static_cast<double>(v.as_int()) : std::get<double>(v.storage());
}

Value eval(const RefExpr& e, const std::vector<Value>& row) {
  switch (e.kind) {
    case RefExpr::Kind::Column:
      return row[e.column];
    case RefExpr::Kind::Constant:
      return e.constant;
    case RefExpr::Kind::Add:
    case RefExpr::Kind::Sub: {
      Value l = eval(e.args[0], row), r = eval(e.args[1], row);
      if (l.is_null() || r.is_null()) return Value::null();
      const bool add = e.kind == RefExpr::Kind::Add;
      if (l.type() == ValueType::Int && r.type() == ValueType::Int) {
        return Value::integer(add ? l.as_int() + r.as_int() : l.as_int() - r.as_int());
      }
      return Value::real(add ? num(l) + num(r) : num(l) - num(r));
    }
    case RefExpr::Kind::Compare: {
      Value l = eval(e.args[0], row), r = eval(e.args[1], row);
      if (l.is_null() || r.is_null()) return Value::null();
      int c;
      if (l.type() == ValueType::Text) {
        c = l.as_text() < r.as_text() ? -1 : (l.as_text() == r.as_text() ? 0 : 1);
      } else {
        double x = num(l), y = num(r);
        c = x < y ? -1 : (x == y ? 0 : 1);
      }
      bool out = e.op == "=" ? c == 0 : e.op == "<>" ? c != 0 : e.op == "<" ? c < 0 : e.op == "<=" ? c <= 0
                 : e.op == ">" ? c > 0 : c >= 0;
      return Value::boolean(out);
    }
    case RefExpr::Kind::IsNull:
      return Value::boolean(eval(e.args[0], row).is_null() != e.negated);
    case RefExpr::Kind::And: {
      int l = truth(eval(e.args[0], row)), r = truth(eval(e.args[1], row));
      if (l == 0 || r == 0) return from_truth(0);
      if (l < 0 || r < 0) return from_truth(-1);
      return from_truth(1);
    }
    case RefExpr::Kind::Or: {
      int l = truth(eval(e.args[0], row)), r = truth(eval(e.args[1], row));
      if (l == 1 || r == 1) return from_truth(1);
      if (l < 0 || r < 0) return from_truth(-1);
      return from_truth(0);
    }
    case RefExpr::Kind::Not: {
      int t = truth(eval(e.args[0], row));
      return from_truth(t < 0 ? -1 : 1 - t);
    }
  }
  return Value::null();
}

// Ascending order with NULL greater than everything.
int ref_compare(const Value& a, const Value& b) {
  if (a.is_null() && b.is_null()) return 0;
  if (a.is_null()) return 1;
  if (b.is_null()) return -1;
  if (a.type() == ValueType::Text) return a.as_text() < b.as_text() ? -1 : (a.as_text() == b.as_text() ? 0 : 1);
  double x = num(a), y = num(b);
  return x < y ? -1 : (x == y ? 0 : 1);
}

}  // namespace

Table random_t1(std::mt19937_64& rng, std::size_t rows) {
  Table t("t1", {{"a", ValueType::Int}, {"b", ValueType::Int}, {"c", ValueType::Double}, {"s", ValueType::Text}});
  for (std::size_t i = 0; i < rows; ++i) {
    std::string letter(1, static_cast<char>('x' + pick(rng, 0, 2)));
    t.append_row({maybe_null(rng, Value::integer(pick(rng, 0, 5))), maybe_null(rng, Value::integer(pick(rng, -3, 6))),
                  maybe_null(rng, Value::real(pick(rng, -4, 6) * 0.5)), maybe_null(rng, Value::text(letter))});
  }
  return t;
}

Table random_t2(std::mt19937_64& rng, std::size_t rows) {
  Table t("t2", {{"k", ValueType::Int}, {"v", ValueType::Int}});
  for (std::size_t i = 0; i < rows; ++i) {
    t.append_row({maybe_null(rng, Value::integer(pick(rng, 0, 7))), maybe_null(rng, Value::integer(pick(rng, 0, 9)))});
  }
  return t;
}

RefQuery random_query(std::mt19937_64& rng) {
  RefQuery q;
  int j = pick(rng, 0, 3);
  q.join = j < 2 ? RefQuery::Join::None : j == 2 ? RefQuery::Join::Inner : RefQuery::Join::FullOuter;
  const bool joined = q.join != RefQuery::Join::None;
  std::size_t width = joined ? 6 : 4;
  if (chance(rng, 70)) q.where = random_predicate(rng, joined, 2);
  if (chance(rng, 45)) {
    static const char* fns[] = {"max", "min", "sum", "count"};
    q.window_fn = fns[pick(rng, 0, 3)];
    std::vector<std::size_t> numeric = {0, 1, 2};
    if (joined) numeric.push_back(5);
    q.window_column = numeric[static_cast<std::size_t>(pick(rng, 0, static_cast<int>(numeric.size()) - 1))];
  }
  std::size_t out_width = width + (q.window_fn ? 1 : 0);
  if (chance(rng, 65)) {
    int keys = pick(rng, 1, 2);
    for (int i = 0; i < keys; ++i) {
      q.order.emplace_back(static_cast<std::size_t>(pick(rng, 0, static_cast<int>(out_width) - 1)), chance(rng, 50));
    }
  }
  if (chance(rng, 30)) q.limit = static_cast<std::size_t>(pick(rng, 0, 15));

  std::string sql = "SELECT a, b, c, s";
  if (joined) sql += ", k, v";
  if (q.window_fn) sql += ", " + *q.window_fn + "(" + kColumnNames[q.window_column] + ") OVER () AS w";
  sql += " FROM t1";
  if (q.join == RefQuery::Join::Inner) sql += " JOIN t2 ON t1.a = t2.k";
  if (q.join == RefQuery::Join::FullOuter) sql += " FULL OUTER JOIN t2 ON t1.a = t2.k";
  if (q.where) sql += " WHERE " + render(*q.where);
  if (!q.order.empty()) {
    sql += " ORDER BY ";
    for (std::size_t i = 0; i < q.order.size(); ++i) {
      if (i) sql += ", ";
      sql += q.order[i].first < width ? kColumnNames[q.order[i].first] : "w";
      if (q.order[i].second) sql += " DESC";
    }
  }
  if (q.limit) sql += " LIMIT " + std::to_string(*q.limit);
  q.sql = sql;
  return q;
}

std::vector<std::vector<Value>> reference_run(const RefQuery& q, const Table& t1, const Table& t2) {
  std::vector<std::vector<Value>> rows;
  if (q.join == RefQuery::Join::None) {
    for (std::size_t i = 0; i < t1.row_count(); ++i) rows.push_back(t1.row(i));
  } else {
    std::vector<bool> right_used(t2.row_count(), false);
    for (std::size_t i = 0; i < t1.row_count(); ++i) {
      auto left = t1.row(i);
      bool matched = false;
      for (std::size_t r = 0; r < t2.row_count(); ++r) {
        auto right = t2.row(r);
        if (left[0].is_null() || right[0].is_null() || left[0].as_int() != right[0].as_int()) continue;
        matched = true;
        right_used[r] = true;
        auto combined = left;
        combined.insert(combined.end(), right.begin(), right.end());
        rows.push_back(combined);
      }
      if (!matched && q.join == RefQuery::Join::FullOuter) {
        left.push_back(Value::null());
        left.push_back(Value::null());
        rows.push_back(left);
      }
    }
    if (q.join == RefQuery::Join::FullOuter) {
      for (std::size_t r = 0; r < t2.row_count(); ++r) {
        if (right_used[r]) continue;
        std::vector<Value> padded(4, Value::null());
        auto right = t2.row(r);
        padded.insert(padded.end(), right.begin(), right.end());
        rows.push_back(padded);
      }
    }
  }

  if (q.where) {
    std::vector<std::vector<Value>> kept;
    for (auto& row : rows) {
      if (truth(eval(*q.where, row)) == 1) kept.push_back(std::move(row));
    }
    rows = std::move(kept);
  }

  if (q.window_fn) {
    Value acc;
    std::int64_t count = 0;
    for (const auto& row : rows) {
      const Value& x = row[q.window_column];
      if (x.is_null()) continue;
      ++count;
      if (acc.is_null()) {
        acc = x;
      } else if (*q.window_fn == "max") {
        if (ref_compare(x, acc) > 0) acc = x;
      } else if (*q.window_fn == "min") {
        if (ref_compare(x, acc) < 0) acc = x;
      } else if (*q.window_fn == "sum") {
        acc = x.type() == ValueType::Int && acc.type() == ValueType::Int ? Value::integer(acc.as_int() + x.as_int())
                                                                          : Value::real(num(acc) + num(x));
      }
    }
    Value w = *q.window_fn == "count" ? Value::integer(count) : acc;
    for (auto& row : rows) row.push_back(w);
  }

  if (!q.order.empty()) {
    // Insertion sort: stable by construction.
    for (std::size_t i = 1; i < rows.size(); ++i) {
      auto cur = std::move(rows[i]);
      std::size_t j = i;
      auto before = [&](const std::vector<Value>& x, const std::vector<Value>& y) {
        for (const auto& [col, desc] : q.order) {
          int c = ref_compare(x[col], y[col]);
          if (c != 0) return desc ? c > 0 : c < 0;
        }
        return false;
      };
      while (j > 0 && before(cur, rows[j - 1])) {
        rows[j] = std::move(rows[j - 1]);
        --j;
      }
      rows[j] = std::move(cur);
    }
  }

  if (q.limit && rows.size() > *q.limit) rows.resize(*q.limit);
  return rows;
}

bool same_rows(const std::vector<std::vector<Value>>& expected, const std::vector<std::vector<Value>>& actual,
               double tol, std::string* why) {
  auto fail = [&](const std::string& msg) {
    if (why) *why = msg;
    return false;
  };
  if (expected.size() != actual.size()) {
    return fail("row count " + std::to_string(actual.size()) + ", expected " + std::to_string(expected.size()));
  }
  for (std::size_t r = 0; r < expected.size(); ++r) {
    if (expected[r].size() != actual[r].size()) return fail("row " + std::to_string(r) + " width differs");
    for (std::size_t c = 0; c < expected[r].size(); ++c) {
      const Value& e = expected[r][c];
      const Value& a = actual[r][c];
      bool ok;
      if (e.type() == ValueType::Double && a.type() == ValueType::Double) {
        ok = std::fabs(e.as_double() - a.as_double()) <= tol;
      } else {
        ok = e == a;
      }
      if (!ok) {
        return fail("row " + std::to_string(r) + " col " + std::to_string(c) + ": got " + a.to_string() +
                    ", expected " + e.to_string());
      }
    }
  }
  return true;
}

}  // namespace flocktest
