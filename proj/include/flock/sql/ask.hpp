#pragma once

#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "flock/catalog.hpp"
#include "flock/provider.hpp"
#include "flock/sql/ast.hpp"
#include "flock/table.hpp"

namespace flockmtl::sql {

/// `CREATE TABLE name (col TYPE, ...);` for each table.
std::string schema_ddl(const std::vector<std::pair<std::string, std::vector<ColumnDef>>>& tables);

/// Every supported function with its signature, one per line.
std::string function_reference_card();

/// System text of the ASK request: task, rules, schema, and the function card.
std::string build_ask_prompt(std::string_view schema);

/// Strips Markdown code fences, surrounding prose markers, and a trailing `;`.
std::string extract_sql(std::string_view response);

/// Function names used anywhere in a statement, lower-cased.
std::vector<std::string> referenced_functions(const SelectStmt& stmt);

struct AskResult {
  std::string sql;
  SelectStmt statement;
  int attempts = 0;
};

/// Extra check on a parsed candidate (binding, for example); throw to reject it.
using AskValidator = std::function<void(const SelectStmt&)>;

/// Generates a single SELECT for `question`. A rejected first answer is retried once with the
/// error appended. Throws Error(GenerationFailed) after two rejections; ProviderError passes through.
AskResult generate_ask_sql(std::string_view question, std::string_view schema, const ModelResource& model,
                           const ProviderClient& client, const AskValidator& validate = {});

}  // namespace flockmtl::sql
