#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "flock/functions.hpp"
#include "flock/sql/ast.hpp"
#include "flock/value.hpp"

namespace flockmtl {

enum class PlanKind {
  Scan,
  TableFunction,
  Values,
  Filter,
  Project,
  Join,
  Aggregate,
  Window,
  Sort,
  Limit,
  CteRef,
  LlmScalar,
  LlmAggregate,
  FtsMatch,
  Ask,
};

std::string_view plan_kind_name(PlanKind kind);

/// Expression with column references resolved to positions in the input row.
struct BoundExpr {
  enum class Kind { Constant, Column, Unary, Binary, Call, Cast, IsNull };
  Kind kind = Kind::Constant;
  Value constant;
  std::size_t column = 0;
  std::string op;  // operator, or lower-case function name for Call
  std::vector<BoundExpr> args;
  TypeSpec cast_type;
  bool negated = false;

  static BoundExpr make_constant(Value v);
  static BoundExpr make_column(std::size_t index);
};

struct ColumnInfo {
  std::string qualifier;
  std::string name;
  bool hidden = false;        // computed helper column, not addressable by name
  std::string source_table;   // base table the column was read from, if any
};

struct AggregateSpec {
  std::string function;             // count, sum, avg, min, max, first
  std::optional<BoundExpr> arg;     // nullopt: count(*)
};

struct SortKey {
  BoundExpr expr;
  bool descending = false;
};

struct LlmNodeInfo {
  LlmCall call;
  std::vector<std::pair<std::string, BoundExpr>> tuple;
  std::string model_label;   // e.g. "model_name=model-relevance-check v1" or "model=gpt-4o"
  std::string prompt_label;
};

struct FtsInfo {
  std::string table;
  BoundExpr id;
  std::string query;
};

struct PlanNode {
  int id = 0;
  PlanKind kind = PlanKind::Scan;
  std::vector<std::shared_ptr<PlanNode>> children;
  std::vector<ColumnInfo> schema;
  std::string detail;

  std::string name;                            // Scan table, TableFunction, CteRef name
  std::optional<BoundExpr> predicate;          // Filter; Join residual
  std::vector<BoundExpr> exprs;                // Project outputs; Aggregate/LlmAggregate group keys
  sql::JoinType join_type = sql::JoinType::Inner;
  std::vector<std::pair<BoundExpr, BoundExpr>> join_keys;  // left side, right side
  std::vector<AggregateSpec> aggregates;       // Aggregate; Window
  std::vector<SortKey> sort_keys;
  std::int64_t limit = 0;
  std::optional<LlmNodeInfo> llm;
  std::optional<FtsInfo> fts;
};

struct LogicalPlan {
  std::shared_ptr<PlanNode> root;
  int node_count = 0;

  /// Pre-order traversal.
  std::vector<const PlanNode*> nodes() const;
  const PlanNode* find(int node_id) const;
  std::vector<std::string> output_names() const;
};

}  // namespace flockmtl
