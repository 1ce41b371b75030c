#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "flock/sql/ast.hpp"

namespace flockmtl::sql {

/// Exactly one statement (a trailing `;` is allowed). Throws SyntaxError.
Statement parse(std::string_view sql);

/// Zero or more statements; `;` separators are optional.
std::vector<Statement> parse_script(std::string_view sql);

Expr parse_expression(std::string_view sql);

/// Type names accepted after `::`. Throws Error(BindingError) for unknown names.
TypeSpec parse_type_name(std::string_view name);

/// Pretty-printer whose output reparses to an equal AST.
std::string to_sql(const Expr& expr);
std::string to_sql(const SelectStmt& stmt);
std::string to_sql(const Statement& stmt);
std::string quote_identifier(std::string_view name);
std::string quote_string(std::string_view text);

}  // namespace flockmtl::sql
