#include <cctype>
#include <sstream>

#include "flock/sql/lexer.hpp"
#include "flock/sql/parser.hpp"

namespace flockmtl::sql {

std::string quote_identifier(std::string_view name) {
  bool plain = !name.empty() && (std::isalpha(static_cast<unsigned char>(name[0])) || name[0] == '_');
  for (char c : name) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_') plain = false;
  }
  if (plain) {
    std::string upper;
    for (char c : name) upper += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    plain = !is_reserved_keyword(upper);
  }
  if (plain) return std::string(name);
  std::string out = "\"";
  for (char c : name) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string quote_string(std::string_view text) {
  std::string out = "'";
  for (char c : text) {
    if (c == '\'') out += '\'';
    out += c;
  }
  return out + "'";
}

namespace {

std::string literal_sql(const Value& v) {
  switch (v.type()) {
    case ValueType::Null: return "NULL";
    case ValueType::Bool: return v.as_bool() ? "TRUE" : "FALSE";
    case ValueType::Int: return std::to_string(v.as_int());
    case ValueType::Double: {
      std::string s = v.to_string();
      if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
      return s;
    }
    case ValueType::Text: return quote_string(v.as_text());
    case ValueType::Json: return quote_string(v.as_json().dump()) + "::JSON";
    case ValueType::DoubleArray: return quote_string(v.to_string()) + "::DOUBLE[" + std::to_string(v.as_array().size()) + "]";
  }
  return "NULL";
}

std::string qualified(const std::string& qualifier, const std::string& name) {
  return qualifier.empty() ? quote_identifier(name) : quote_identifier(qualifier) + "." + quote_identifier(name);
}

std::string table_ref_sql(const TableRef& ref) {
  std::string out;
  switch (ref.kind) {
    case TableRef::Kind::Named:
      out = quote_identifier(ref.name);
      break;
    case TableRef::Kind::Function:
      out = quote_identifier(ref.name) + "()";
      break;
    case TableRef::Kind::Join: {
      out = table_ref_sql(ref.children[0]);
      switch (ref.join_type) {
        case JoinType::Inner: out += " INNER JOIN "; break;
        case JoinType::FullOuter: out += " FULL OUTER JOIN "; break;
        case JoinType::Cross: out += " CROSS JOIN "; break;
      }
      out += table_ref_sql(ref.children[1]);
      if (ref.on) out += " ON " + to_sql(*ref.on);
      return out;
    }
  }
  if (ref.alias) out += " AS " + quote_identifier(*ref.alias);
  return out;
}

}  // namespace

std::string to_sql(const Expr& e) {
  switch (e.kind) {
    case ExprKind::Literal:
      return literal_sql(e.literal);
    case ExprKind::Column:
      return qualified(e.qualifier, e.name);
    case ExprKind::Star:
      return e.qualifier.empty() ? "*" : quote_identifier(e.qualifier) + ".*";
    case ExprKind::Unary:
      return "(" + e.op + " " + to_sql(e.args[0]) + ")";
    case ExprKind::Binary:
      return "(" + to_sql(e.args[0]) + " " + e.op + " " + to_sql(e.args[1]) + ")";
    case ExprKind::IsNull:
      return "(" + to_sql(e.args[0]) + (e.negated ? " IS NOT NULL)" : " IS NULL)");
    case ExprKind::Cast:
      return "(" + to_sql(e.args[0]) + ")::" + e.cast_type.to_sql();
    case ExprKind::Map: {
      std::string out = "{";
      for (std::size_t i = 0; i < e.keys.size(); ++i) {
        if (i) out += ", ";
        out += quote_string(e.keys[i]) + ": " + to_sql(e.args[i]);
      }
      return out + "}";
    }
    case ExprKind::Call: {
      std::string out = qualified(e.qualifier, e.name) + "(";
      for (std::size_t i = 0; i < e.args.size(); ++i) {
        if (i) out += ", ";
        if (i < e.keys.size() && !e.keys[i].empty()) out += quote_identifier(e.keys[i]) + " := ";
        out += to_sql(e.args[i]);
      }
      out += ")";
      if (e.over) out += " OVER ()";
      return out;
    }
  }
  return "";
}

std::string to_sql(const SelectStmt& s) {
  std::string out;
  if (!s.ctes.empty()) {
    out += "WITH ";
    for (std::size_t i = 0; i < s.ctes.size(); ++i) {
      if (i) out += ", ";
      out += quote_identifier(s.ctes[i].name) + " AS (" + to_sql(*s.ctes[i].query) + ")";
    }
    out += " ";
  }
  out += "SELECT ";
  for (std::size_t i = 0; i < s.items.size(); ++i) {
    if (i) out += ", ";
    out += to_sql(s.items[i].expr);
    if (s.items[i].alias) out += " AS " + quote_identifier(*s.items[i].alias);
  }
  if (s.from) out += " FROM " + table_ref_sql(*s.from);
  if (s.where) out += " WHERE " + to_sql(*s.where);
  if (!s.group_by.empty()) {
    out += " GROUP BY ";
    for (std::size_t i = 0; i < s.group_by.size(); ++i) {
      if (i) out += ", ";
      out += to_sql(s.group_by[i]);
    }
  }
  if (!s.order_by.empty()) {
    out += " ORDER BY ";
    for (std::size_t i = 0; i < s.order_by.size(); ++i) {
      if (i) out += ", ";
      out += to_sql(s.order_by[i].expr) + (s.order_by[i].descending ? " DESC" : " ASC");
    }
  }
  if (s.limit) out += " LIMIT " + std::to_string(*s.limit);
  return out;
}

std::string to_sql(const Statement& stmt) {
  struct Visitor {
    std::string operator()(const SelectStmt& s) const { return to_sql(s); }
    std::string operator()(const ResourceStmt& r) const {
      std::string out;
      switch (r.action) {
        case ResourceStmt::Action::Create: out = "CREATE "; break;
        case ResourceStmt::Action::Update: out = "UPDATE "; break;
        case ResourceStmt::Action::Delete: out = "DELETE "; break;
      }
      if (r.scope) out += std::string(scope_name(*r.scope)) + " ";
      out += r.kind == ResourceKind::Model ? "MODEL(" : "PROMPT(";
      out += quote_string(r.name);
      if (r.action != ResourceStmt::Action::Delete) {
        if (r.kind == ResourceKind::Model) {
          out += ", " + quote_string(r.model_id) + ", " + quote_string(r.provider);
          if (!r.params.empty()) {
            out += ", {";
            bool first = true;
            for (const auto& [k, v] : r.params.items()) {
              if (!first) out += ", ";
              first = false;
              out += quote_string(k) + ": " + literal_sql(value_from_json(v));
            }
            out += "}";
          }
        } else {
          out += ", " + quote_string(r.text);
        }
      }
      return out + ")";
    }
    std::string operator()(const CreateTableStmt& c) const {
      std::string out = "CREATE TABLE " + quote_identifier(c.table) + " AS ";
      if (c.path) return out + "FROM " + quote_string(*c.path);
      return out + to_sql(*c.query);
    }
    std::string operator()(const CreateFtsIndexStmt& c) const {
      return "CREATE FTS INDEX ON " + quote_identifier(c.table) + "(" + quote_identifier(c.id_column) + ", " +
             quote_identifier(c.text_column) + ")";
    }
    std::string operator()(const AskStmt& a) const { return "ASK " + quote_string(a.question); }
  };
  return std::visit(Visitor{}, stmt);
}

}  // namespace flockmtl::sql
