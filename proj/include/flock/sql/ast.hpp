#pragma once

#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "flock/catalog.hpp"
#include "flock/value.hpp"

namespace flockmtl::sql {

/// Source position. Compares equal to every other position so ASTs compare structurally.
struct SourcePos {
  int line = 0;
  int column = 0;
  bool operator==(const SourcePos&) const { return true; }
};

enum class ExprKind { Literal, Column, Star, Unary, Binary, Call, Map, Cast, IsNull };

struct Expr {
  ExprKind kind = ExprKind::Literal;
  Value literal;               // Literal
  std::string qualifier;       // Column, Star (t.*), Call (schema-qualified name)
  std::string name;            // Column or function name
  std::string op;              // Unary: "-", "NOT"; Binary: "AND", "=", "||", ...
  std::vector<Expr> args;      // operands, call arguments, map values
  std::vector<std::string> keys;  // Map keys; for Call, named-argument names ("" when positional)
  TypeSpec cast_type;          // Cast
  bool negated = false;        // IS NOT NULL
  bool over = false;           // Call followed by OVER ()
  SourcePos pos;

  bool operator==(const Expr&) const = default;

  static Expr make_literal(Value v, SourcePos pos = {});
  static Expr make_column(std::string qualifier, std::string name, SourcePos pos = {});
  static Expr make_binary(std::string op, Expr lhs, Expr rhs, SourcePos pos = {});
  static Expr make_unary(std::string op, Expr operand, SourcePos pos = {});
};

struct SelectItem {
  Expr expr;
  std::optional<std::string> alias;
  bool operator==(const SelectItem&) const = default;
};

enum class JoinType { Inner, FullOuter, Cross };

struct TableRef {
  enum class Kind { Named, Function, Join };
  Kind kind = Kind::Named;
  std::string name;                // table/CTE name or table function name
  std::optional<std::string> alias;
  JoinType join_type = JoinType::Inner;
  std::vector<TableRef> children;  // Join: left, right
  std::optional<Expr> on;
  SourcePos pos;

  bool operator==(const TableRef&) const = default;
};

struct OrderItem {
  Expr expr;
  bool descending = false;
  bool operator==(const OrderItem&) const = default;
};

struct SelectStmt;

struct Cte {
  std::string name;
  std::shared_ptr<SelectStmt> query;
  bool operator==(const Cte& other) const;
};

struct SelectStmt {
  std::vector<Cte> ctes;
  std::vector<SelectItem> items;
  std::optional<TableRef> from;
  std::optional<Expr> where;
  std::vector<Expr> group_by;
  std::vector<OrderItem> order_by;
  std::optional<std::int64_t> limit;
  SourcePos pos;

  bool operator==(const SelectStmt&) const = default;
};

/// CREATE / UPDATE / DELETE of MODEL and PROMPT resources.
struct ResourceStmt {
  enum class Action { Create, Update, Delete };
  Action action = Action::Create;
  ResourceKind kind = ResourceKind::Model;
  std::optional<Scope> scope;
  std::string name;
  std::string model_id;  // MODEL
  std::string provider;  // MODEL
  Json params = Json::object();  // MODEL: optional generation params
  std::string text;      // PROMPT

  bool operator==(const ResourceStmt&) const = default;
};

/// CREATE TABLE t AS FROM 'file.csv' | CREATE TABLE t AS SELECT ...
struct CreateTableStmt {
  std::string table;
  std::optional<std::string> path;
  std::shared_ptr<SelectStmt> query;

  bool operator==(const CreateTableStmt& other) const;
};

/// CREATE FTS INDEX ON t(id, text)
struct CreateFtsIndexStmt {
  std::string table;
  std::string id_column;
  std::string text_column;
  bool operator==(const CreateFtsIndexStmt&) const = default;
};

struct AskStmt {
  std::string question;
  bool operator==(const AskStmt&) const = default;
};

using Statement = std::variant<SelectStmt, ResourceStmt, CreateTableStmt, CreateFtsIndexStmt, AskStmt>;

}  // namespace flockmtl::sql
