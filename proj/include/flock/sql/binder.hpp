#pragma once

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "flock/catalog.hpp"
#include "flock/plan.hpp"
#include "flock/sql/ast.hpp"
#include "flock/table.hpp"

namespace flockmtl::sql {

/// What the binder may look up besides the catalog.
struct BindEnvironment {
  std::function<std::optional<std::vector<ColumnDef>>(const std::string&)> table_columns;
  /// Table name -> (id column, text column) of its full-text index.
  std::function<std::optional<std::pair<std::string, std::string>>(const std::string&)> fts_index;
};

/// Columns produced by the introspection table functions.
std::vector<std::string> table_function_columns(const std::string& name);

/// Resolves names, verifies resources, and lowers a SELECT into a logical plan.
/// Throws Error(BindingError | UnknownResource | MisplacedAggregate).
LogicalPlan bind_and_plan(const SelectStmt& stmt, const Catalog& catalog, const BindEnvironment& env);

}  // namespace flockmtl::sql
