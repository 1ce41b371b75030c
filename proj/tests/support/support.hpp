#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "flock/database.hpp"
#include "flock/mock_provider.hpp"
#include "flock/table.hpp"
#include "flock/value.hpp"

namespace flocktest {

using flockmtl::Value;

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

std::filesystem::path source_dir();
std::filesystem::path fixtures_dir();
std::string read_file(const std::filesystem::path& path);

/// Options for an offline database in `workspace`: every provider routed to `mock`, no retry sleeps,
/// a private global catalog, and the bundled provider registry.
flockmtl::DatabaseOptions offline_options(const std::filesystem::path& workspace,
                                          std::shared_ptr<flockmtl::MockBackend> mock = nullptr);

/// Shared mock wired to the bundled registry (embedding dimensions come from it).
std::shared_ptr<flockmtl::MockBackend> make_mock();

// ---- independent oracles --------------------------------------------------------

std::vector<std::string> naive_tokens(const std::string& text);

/// BM25 recomputed from raw token lists with no index. Documents without a query term are absent.
std::vector<std::optional<double>> naive_bm25(const std::vector<std::string>& docs, const std::string& query,
                                              double k1 = 1.2, double b = 0.75);

/// Fusion rules written out longhand; `method` is "rrf", "combsum", "combmnz", "combmed" or "combanz".
std::optional<double> brute_fusion(const std::string& method, const std::vector<std::optional<double>>& inputs);

double naive_cosine(const std::vector<double>& a, const std::vector<double>& b);

// ---- row-at-a-time reference interpreter ----------------------------------------------

/// Expression over a combined row (t1 columns, then t2 columns when joined).
struct RefExpr {
  enum class Kind { Column, Constant, Add, Sub, Compare, IsNull, And, Or, Not };
  Kind kind = Kind::Constant;
  std::size_t column = 0;
  Value constant;
  std::string op;
  bool negated = false;
  std::vector<RefExpr> args;
};

struct RefQuery {
  enum class Join { None, Inner, FullOuter };
  Join join = Join::None;
  std::optional<RefExpr> where;
  std::optional<std::string> window_fn;  // max, min, sum, count
  std::size_t window_column = 0;
  std::vector<std::pair<std::size_t, bool>> order;  // output column, descending
  std::optional<std::size_t> limit;
  std::string sql;
};

/// t1(a INT, b INT, c DOUBLE, s TEXT) and t2(k INT, v INT) with NULLs sprinkled in.
flockmtl::Table random_t1(std::mt19937_64& rng, std::size_t rows);
flockmtl::Table random_t2(std::mt19937_64& rng, std::size_t rows);

RefQuery random_query(std::mt19937_64& rng);

/// Evaluates `q` one row at a time without touching the engine.
std::vector<std::vector<Value>> reference_run(const RefQuery& q, const flockmtl::Table& t1,
                                              const flockmtl::Table& t2);

/// Row-for-row equality; doubles within `tol`. On mismatch `why` says where.
bool same_rows(const std::vector<std::vector<Value>>& expected, const std::vector<std::vector<Value>>& actual,
               double tol, std::string* why = nullptr);

}  // namespace flocktest
