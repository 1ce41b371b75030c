#pragma once

#include <chrono>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "flock/catalog.hpp"
#include "flock/plan.hpp"
#include "flock/retrieval.hpp"
#include "flock/runtime.hpp"
#include "flock/table.hpp"

namespace flockmtl {

/// Inspector knobs for LLM nodes. Unset fields keep the plan's defaults.
struct NodeOverride {
  std::optional<BatchMode> batch_mode;
  std::optional<SerializationFormat> format;
  std::optional<PromptTemplate> prompt_template;
  /// false: skip cache lookups (fresh predictions are still stored).
  std::optional<bool> use_cache;

  bool empty() const { return !batch_mode && !format && !prompt_template && !use_cache; }
  bool operator==(const NodeOverride&) const = default;
};

struct ExecOverrides {
  NodeOverride global;
  std::map<int, NodeOverride> per_node;

  /// Per-node fields win over global ones.
  NodeOverride for_node(int node_id) const;
  LlmCall apply(int node_id, LlmCall call) const;

  /// {"batch_mode": "auto" | n, "serialization_format": "XML", "prompt_template": "...",
  ///  "cache": bool, "nodes": {"<id>": {...}}}. Throws Error(InvalidOverride) or Error(InvalidTemplate).
  static ExecOverrides from_json(const Json& j);
  Json to_json() const;
  bool operator==(const ExecOverrides&) const = default;
};

struct NodeStats {
  int node_id = 0;
  std::size_t rows_out = 0;
  std::chrono::microseconds wall_time{0};
  std::optional<InferenceStats> inference;  // LLM nodes only
  std::string meta_prompt;                  // LLM nodes: full prompt of the first request
  std::string batch_mode;
  std::string format;
};

struct QueryResult {
  std::vector<std::string> column_names;
  std::vector<std::vector<Value>> rows;
  std::map<int, NodeStats> stats;
  std::chrono::microseconds wall_time{0};
  LogicalPlan plan;
  std::optional<std::string> generated_sql;  // ASK statements

  /// First non-NULL value's type per column; NULL when the column is all NULL.
  std::vector<ValueType> column_types() const;
  std::size_t provider_calls() const;
  /// {"columns": [{name, type}], "rows": [[...]], "row_count", "wall_time_ms"}.
  Json to_json() const;
};

/// Lookups the executor needs besides the plan.
struct ExecEnvironment {
  std::function<const Table*(const std::string&)> table;
  std::function<const InvertedIndex*(const std::string&)> fts_index;
  const Catalog* catalog = nullptr;
  const InferenceRuntime* runtime = nullptr;
};

/// Throws ExecError naming the failing node.
QueryResult execute_plan(const LogicalPlan& plan, const ExecEnvironment& env, const ExecOverrides& overrides = {});

/// Scalar expression over one input row. Throws Error(TypeMismatch | DimensionMismatch | ...).
Value evaluate(const BoundExpr& expr, const std::vector<Value>& row);

/// `value::type`. Throws Error(TypeMismatch) or Error(DimensionMismatch).
Value cast_value(const Value& value, const TypeSpec& type);

}  // namespace flockmtl
