#include "flock/sql/parser.hpp"

#include <cctype>
#include <charconv>

#include "flock/error.hpp"
#include "flock/sql/lexer.hpp"

namespace flockmtl::sql {

Expr Expr::make_literal(Value v, SourcePos pos) {
  Expr e;
  e.kind = ExprKind::Literal;
  e.literal = std::move(v);
  e.pos = pos;
  return e;
}

Expr Expr::make_column(std::string qualifier, std::string name, SourcePos pos) {
  Expr e;
  e.kind = ExprKind::Column;
  e.qualifier = std::move(qualifier);
  e.name = std::move(name);
  e.pos = pos;
  return e;
}

Expr Expr::make_binary(std::string op, Expr lhs, Expr rhs, SourcePos pos) {
  Expr e;
  e.kind = ExprKind::Binary;
  e.op = std::move(op);
  e.args.push_back(std::move(lhs));
  e.args.push_back(std::move(rhs));
  e.pos = pos;
  return e;
}

Expr Expr::make_unary(std::string op, Expr operand, SourcePos pos) {
  Expr e;
  e.kind = ExprKind::Unary;
  e.op = std::move(op);
  e.args.push_back(std::move(operand));
  e.pos = pos;
  return e;
}

bool Cte::operator==(const Cte& other) const {
  if (name != other.name) return false;
  if (!query || !other.query) return query == other.query;
  return *query == *other.query;
}

bool CreateTableStmt::operator==(const CreateTableStmt& other) const {
  if (table != other.table || path != other.path) return false;
  if (!query || !other.query) return query == other.query;
  return *query == *other.query;
}

TypeSpec parse_type_name(std::string_view name) {
  std::string upper;
  for (char c : name) upper += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  TypeSpec t;
  if (upper == "INT" || upper == "INTEGER" || upper == "BIGINT" || upper == "INT64") {
    t.type = ValueType::Int;
  } else if (upper == "DOUBLE" || upper == "FLOAT" || upper == "REAL") {
    t.type = ValueType::Double;
  } else if (upper == "TEXT" || upper == "VARCHAR" || upper == "STRING") {
    t.type = ValueType::Text;
  } else if (upper == "BOOL" || upper == "BOOLEAN") {
    t.type = ValueType::Bool;
  } else if (upper == "JSON") {
    t.type = ValueType::Json;
  } else {
    throw Error(ErrorCode::BindingError, "unknown type " + std::string(name));
  }
  return t;
}

namespace {

class Parser {
 public:
  explicit Parser(std::string_view sql) : tokens_(tokenize_sql(sql)) {}

  std::vector<Statement> script() {
    std::vector<Statement> out;
    while (true) {
      while (accept_punct(";")) {
      }
      if (at_end()) return out;
      out.push_back(statement());
      if (!at_end() && !check_punct(";") && !starts_statement()) {
        fail("expected end of statement", "';'");
      }
    }
  }

  Expr standalone_expression() {
    Expr e = expression();
    if (!at_end()) fail("unexpected token after expression", "end of input");
    return e;
  }

 private:
  // ---- token helpers -------------------------------------------------------
  const Token& cur() const { return tokens_[pos_]; }
  const Token& ahead(std::size_t n) const { return tokens_[std::min(pos_ + n, tokens_.size() - 1)]; }
  bool at_end() const { return cur().kind == TokenKind::End; }
  SourcePos here() const { return {cur().line, cur().column}; }
  void bump() {
    if (!at_end()) ++pos_;
  }

  [[noreturn]] void fail(const std::string& message, const std::string& expected = {}) const {
    const Token& t = cur();
    std::string found = t.kind == TokenKind::End ? "end of input"
                                                 : std::string(token_kind_name(t.kind)) + " '" + std::string(t.text) + "'";
    throw SyntaxError(message + ", found " + found, t.line, t.column, expected);
  }

  bool check_keyword(std::string_view kw) const { return cur().kind == TokenKind::Keyword && cur().value == kw; }
  bool accept_keyword(std::string_view kw) {
    if (!check_keyword(kw)) return false;
    bump();
    return true;
  }
  void expect_keyword(std::string_view kw) {
    if (!accept_keyword(kw)) fail("unexpected token", std::string(kw));
  }

  static bool iequals(std::string_view a, std::string_view b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (std::toupper(static_cast<unsigned char>(a[i])) != std::toupper(static_cast<unsigned char>(b[i]))) return false;
    }
    return true;
  }
  // Contextual words (MODEL, PROMPT, TABLE, ...) arrive as unquoted identifiers.
  bool check_word(std::string_view word) const {
    return cur().kind == TokenKind::Identifier && cur().text.front() != '"' && iequals(cur().value, word);
  }
  bool accept_word(std::string_view word) {
    if (!check_word(word)) return false;
    bump();
    return true;
  }
  void expect_word(std::string_view word) {
    if (!accept_word(word)) fail("unexpected token", std::string(word));
  }

  bool check_punct(std::string_view p) const { return cur().kind == TokenKind::Punct && cur().text == p; }
  bool accept_punct(std::string_view p) {
    if (!check_punct(p)) return false;
    bump();
    return true;
  }
  void expect_punct(std::string_view p) {
    if (!accept_punct(p)) fail("unexpected token", "'" + std::string(p) + "'");
  }
  bool check_op(std::string_view op) const { return cur().kind == TokenKind::Operator && cur().text == op; }
  bool accept_op(std::string_view op) {
    if (!check_op(op)) return false;
    bump();
    return true;
  }

  std::string identifier(const std::string& what = "identifier") {
    if (cur().kind != TokenKind::Identifier) fail("unexpected token", what);
    std::string v = cur().value;
    bump();
    return v;
  }

  std::string string_literal(const std::string& what = "string literal") {
    if (cur().kind != TokenKind::String) fail("unexpected token", what);
    std::string v = cur().value;
    bump();
    return v;
  }

  bool starts_statement() const {
    return check_keyword("SELECT") || check_keyword("WITH") || check_keyword("CREATE") || check_keyword("UPDATE") ||
           check_keyword("DELETE") || check_keyword("ASK");
  }

  // ---- statements ------------------------------------------------------------
  Statement statement() {
    if (check_keyword("SELECT") || check_keyword("WITH")) return select();
    if (accept_keyword("CREATE")) return create();
    if (accept_keyword("UPDATE")) return resource(ResourceStmt::Action::Update);
    if (accept_keyword("DELETE")) return resource(ResourceStmt::Action::Delete);
    if (accept_keyword("ASK")) {
      AskStmt ask;
      ask.question = string_literal("question string");
      return ask;
    }
    fail("expected a statement", "SELECT, WITH, CREATE, UPDATE, DELETE or ASK");
  }

  Statement create() {
    if (check_word("TABLE")) {
      bump();
      CreateTableStmt stmt;
      stmt.table = identifier("table name");
      expect_keyword("AS");
      if (accept_keyword("FROM")) {
        stmt.path = string_literal("file path");
      } else if (check_keyword("SELECT") || check_keyword("WITH")) {
        stmt.query = std::make_shared<SelectStmt>(select());
      } else {
        fail("unexpected token", "FROM 'file' or SELECT");
      }
      return stmt;
    }
    if (check_word("FTS")) {
      bump();
      expect_word("INDEX");
      expect_keyword("ON");
      CreateFtsIndexStmt stmt;
      stmt.table = identifier("table name");
      expect_punct("(");
      stmt.id_column = identifier("id column");
      expect_punct(",");
      stmt.text_column = identifier("text column");
      expect_punct(")");
      return stmt;
    }
    return resource(ResourceStmt::Action::Create);
  }

  Statement resource(ResourceStmt::Action action) {
    ResourceStmt stmt;
    stmt.action = action;
    if (accept_word("GLOBAL")) {
      stmt.scope = Scope::Global;
    } else if (accept_word("LOCAL")) {
      stmt.scope = Scope::Local;
    }
    if (accept_word("MODEL")) {
      stmt.kind = ResourceKind::Model;
    } else if (accept_word("PROMPT")) {
      stmt.kind = ResourceKind::Prompt;
    } else {
      fail("unexpected token", action == ResourceStmt::Action::Create ? "MODEL, PROMPT, TABLE or FTS INDEX"
                                                                      : "MODEL or PROMPT");
    }
    expect_punct("(");
    stmt.name = string_literal("resource name");
    if (action != ResourceStmt::Action::Delete) {
      expect_punct(",");
      if (stmt.kind == ResourceKind::Model) {
        stmt.model_id = string_literal("model id");
        expect_punct(",");
        stmt.provider = string_literal("provider id");
        if (accept_punct(",")) {
          Expr params = map_literal();
          stmt.params = literal_map_to_json(params);
        }
      } else {
        stmt.text = string_literal("prompt text");
      }
    }
    expect_punct(")");
    return stmt;
  }

  Json literal_map_to_json(const Expr& map) {
    Json out = Json::object();
    for (std::size_t i = 0; i < map.keys.size(); ++i) {
      const Expr& v = map.args[i];
      if (v.kind == ExprKind::Literal) {
        out[map.keys[i]] = v.literal.to_json();
      } else if (v.kind == ExprKind::Unary && v.op == "-" && v.args[0].kind == ExprKind::Literal &&
                 v.args[0].literal.is_numeric()) {
        out[map.keys[i]] = -v.args[0].literal.as_double();
      } else {
        throw SyntaxError("model parameters must be literals", v.pos.line, v.pos.column);
      }
    }
    return out;
  }

  SelectStmt select() {
    SelectStmt stmt;
    stmt.pos = here();
    if (accept_keyword("WITH")) {
      do {
        Cte cte;
        cte.name = identifier("CTE name");
        expect_keyword("AS");
        expect_punct("(");
        cte.query = std::make_shared<SelectStmt>(select());
        expect_punct(")");
        stmt.ctes.push_back(std::move(cte));
      } while (accept_punct(","));
    }
    expect_keyword("SELECT");
    if (check_keyword("DISTINCT")) fail("DISTINCT is not supported");
    do {
      stmt.items.push_back(select_item());
    } while (accept_punct(","));

    if (accept_keyword("FROM")) stmt.from = from_clause();
    if (accept_keyword("WHERE")) stmt.where = expression();
    if (accept_keyword("GROUP")) {
      expect_keyword("BY");
      do {
        stmt.group_by.push_back(expression());
      } while (accept_punct(","));
    }
    if (check_keyword("HAVING")) fail("HAVING is not supported");
    if (accept_keyword("ORDER")) {
      expect_keyword("BY");
      do {
        OrderItem item;
        item.expr = expression();
        if (accept_keyword("DESC")) {
          item.descending = true;
        } else {
          accept_keyword("ASC");
        }
        stmt.order_by.push_back(std::move(item));
      } while (accept_punct(","));
    }
    if (accept_keyword("LIMIT")) {
      if (cur().kind != TokenKind::Number) fail("unexpected token", "integer");
      std::int64_t n = 0;
      auto text = cur().text;
      auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), n);
      if (ec != std::errc() || ptr != text.data() + text.size()) fail("LIMIT needs a non-negative integer", "integer");
      bump();
      stmt.limit = n;
    }
    return stmt;
  }

  SelectItem select_item() {
    SelectItem item;
    item.expr = expression(true);
    if (accept_keyword("AS")) {
      item.alias = identifier("alias");
    } else if (cur().kind == TokenKind::Identifier) {
      item.alias = identifier();
    }
    return item;
  }

  TableRef from_clause() {
    TableRef left = table_primary();
    while (true) {
      SourcePos pos = here();
      JoinType type;
      bool needs_on = true;
      if (accept_punct(",")) {
        type = JoinType::Cross;
        needs_on = false;
      } else if (accept_keyword("CROSS")) {
        expect_keyword("JOIN");
        type = JoinType::Cross;
        needs_on = false;
      } else if (accept_keyword("FULL")) {
        accept_keyword("OUTER");
        expect_keyword("JOIN");
        type = JoinType::FullOuter;
      } else if (accept_keyword("INNER")) {
        expect_keyword("JOIN");
        type = JoinType::Inner;
      } else if (accept_keyword("JOIN")) {
        type = JoinType::Inner;
      } else {
        return left;
      }
      TableRef join;
      join.kind = TableRef::Kind::Join;
      join.join_type = type;
      join.pos = pos;
      join.children.push_back(std::move(left));
      join.children.push_back(table_primary());
      if (needs_on) {
        expect_keyword("ON");
        join.on = expression();
      }
      left = std::move(join);
    }
  }

  TableRef table_primary() {
    TableRef ref;
    ref.pos = here();
    if (check_punct("(")) fail("subqueries in FROM are not supported; use a CTE");
    ref.name = identifier("table name");
    if (accept_punct("(")) {
      ref.kind = TableRef::Kind::Function;
      expect_punct(")");
    }
    if (accept_keyword("AS")) {
      ref.alias = identifier("alias");
    } else if (cur().kind == TokenKind::Identifier) {
      ref.alias = identifier();
    }
    return ref;
  }

  // ---- expressions -----------------------------------------------------------
  Expr expression(bool allow_star = false) {
    if (allow_star && check_op("*")) {
      Expr e;
      e.kind = ExprKind::Star;
      e.pos = here();
      bump();
      return e;
    }
    return or_expr();
  }

  Expr or_expr() {
    Expr lhs = and_expr();
    while (check_keyword("OR")) {
      SourcePos pos = here();
      bump();
      lhs = Expr::make_binary("OR", std::move(lhs), and_expr(), pos);
    }
    return lhs;
  }

  Expr and_expr() {
    Expr lhs = not_expr();
    while (check_keyword("AND")) {
      SourcePos pos = here();
      bump();
      lhs = Expr::make_binary("AND", std::move(lhs), not_expr(), pos);
    }
    return lhs;
  }

  Expr not_expr() {
    if (check_keyword("NOT")) {
      SourcePos pos = here();
      bump();
      return Expr::make_unary("NOT", not_expr(), pos);
    }
    return comparison();
  }

  Expr comparison() {
    Expr lhs = additive();
    while (true) {
      SourcePos pos = here();
      if (cur().kind == TokenKind::Operator) {
        std::string op(cur().text);
        if (op == "==") op = "=";
        if (op == "!=") op = "<>";
        if (op == "=" || op == "<>" || op == "<" || op == "<=" || op == ">" || op == ">=") {
          bump();
          lhs = Expr::make_binary(op, std::move(lhs), additive(), pos);
          continue;
        }
      }
      if (check_keyword("IS")) {
        bump();
        Expr e;
        e.kind = ExprKind::IsNull;
        e.pos = pos;
        e.negated = accept_keyword("NOT");
        expect_keyword("NULL");
        e.args.push_back(std::move(lhs));
        lhs = std::move(e);
        continue;
      }
      return lhs;
    }
  }

  Expr additive() {
    Expr lhs = multiplicative();
    while (check_op("+") || check_op("-") || check_op("||")) {
      SourcePos pos = here();
      std::string op(cur().text);
      bump();
      lhs = Expr::make_binary(op, std::move(lhs), multiplicative(), pos);
    }
    return lhs;
  }

  Expr multiplicative() {
    Expr lhs = unary();
    while (check_op("*") || check_op("/") || check_op("%")) {
      SourcePos pos = here();
      std::string op(cur().text);
      bump();
      lhs = Expr::make_binary(op, std::move(lhs), unary(), pos);
    }
    return lhs;
  }

  Expr unary() {
    if (check_op("-") || check_op("+")) {
      SourcePos pos = here();
      std::string op(cur().text);
      bump();
      return Expr::make_unary(op, unary(), pos);
    }
    return postfix();
  }

  Expr postfix() {
    Expr e = primary();
    while (check_op("::")) {
      SourcePos pos = here();
      bump();
      Expr cast;
      cast.kind = ExprKind::Cast;
      cast.pos = pos;
      cast.cast_type = type_name();
      cast.args.push_back(std::move(e));
      e = std::move(cast);
    }
    return e;
  }

  TypeSpec type_name() {
    if (cur().kind != TokenKind::Identifier) fail("unexpected token", "type name");
    std::string name = cur().value;
    int line = cur().line, column = cur().column;
    bump();
    TypeSpec t;
    try {
      t = parse_type_name(name);
    } catch (const Error&) {
      throw SyntaxError("unknown type '" + name + "'", line, column, "INTEGER, DOUBLE, TEXT, BOOLEAN, JSON or DOUBLE[n]");
    }
    if (accept_punct("[")) {
      if (t.type != ValueType::Double) throw SyntaxError("only DOUBLE arrays are supported", line, column);
      t.type = ValueType::DoubleArray;
      if (cur().kind == TokenKind::Number) {
        std::size_t n = 0;
        auto text = cur().text;
        auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), n);
        if (ec != std::errc() || ptr != text.data() + text.size() || n == 0) fail("array length must be a positive integer");
        bump();
        t.array_length = n;
      }
      expect_punct("]");
    }
    return t;
  }

  Expr primary() {
    SourcePos pos = here();
    const Token& t = cur();
    switch (t.kind) {
      case TokenKind::Number: {
        std::string text(t.text);
        bump();
        if (text.find_first_of(".eE") == std::string::npos) {
          std::int64_t v = 0;
          auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
          if (ec == std::errc() && ptr == text.data() + text.size()) return Expr::make_literal(Value::integer(v), pos);
        }
        return Expr::make_literal(Value::real(std::stod(text)), pos);
      }
      case TokenKind::String: {
        std::string v = t.value;
        bump();
        return Expr::make_literal(Value::text(std::move(v)), pos);
      }
      case TokenKind::Keyword:
        if (accept_keyword("NULL")) return Expr::make_literal(Value::null(), pos);
        if (accept_keyword("TRUE")) return Expr::make_literal(Value::boolean(true), pos);
        if (accept_keyword("FALSE")) return Expr::make_literal(Value::boolean(false), pos);
        fail("unexpected keyword", "expression");
      case TokenKind::Punct:
        if (check_punct("(")) {
          bump();
          Expr inner = expression();
          expect_punct(")");
          return inner;
        }
        if (check_punct("{")) return map_literal();
        fail("unexpected token", "expression");
      case TokenKind::Identifier:
        return name_expression();
      default:
        fail("unexpected token", "expression");
    }
  }

  Expr map_literal() {
    Expr map;
    map.kind = ExprKind::Map;
    map.pos = here();
    expect_punct("{");
    if (!check_punct("}")) {
      do {
        std::string key = string_literal("map key string");
        for (const auto& k : map.keys) {
          if (k == key) throw SyntaxError("duplicate map key '" + key + "'", map.pos.line, map.pos.column);
        }
        expect_punct(":");
        map.keys.push_back(std::move(key));
        map.args.push_back(expression());
      } while (accept_punct(","));
    }
    expect_punct("}");
    return map;
  }

  Expr name_expression() {
    SourcePos pos = here();
    std::string first = identifier();
    std::string qualifier;
    std::string name = first;
    if (check_punct(".")) {
      bump();
      if (check_op("*")) {
        bump();
        Expr star;
        star.kind = ExprKind::Star;
        star.qualifier = first;
        star.pos = pos;
        return star;
      }
      qualifier = first;
      name = identifier("column or function name");
    }
    if (!check_punct("(")) return Expr::make_column(qualifier, name, pos);

    bump();
    Expr call;
    call.kind = ExprKind::Call;
    call.qualifier = qualifier;
    call.name = name;
    call.pos = pos;
    if (check_op("*")) {
      Expr star;
      star.kind = ExprKind::Star;
      star.pos = here();
      bump();
      call.args.push_back(std::move(star));
      call.keys.emplace_back();
    } else if (!check_punct(")")) {
      do {
        if (cur().kind == TokenKind::Identifier && ahead(1).kind == TokenKind::Operator &&
            (ahead(1).text == ":=" || ahead(1).text == "=>")) {
          call.keys.push_back(identifier());
          bump();
        } else {
          call.keys.emplace_back();
        }
        call.args.push_back(expression());
      } while (accept_punct(","));
    }
    expect_punct(")");
    if (accept_keyword("OVER")) {
      expect_punct("(");
      if (!check_punct(")")) fail("only empty window frames are supported", "')'");
      expect_punct(")");
      call.over = true;
    }
    return call;
  }

  std::vector<Token> tokens_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<Statement> parse_script(std::string_view sql) { return Parser(sql).script(); }

Statement parse(std::string_view sql) {
  auto stmts = parse_script(sql);
  if (stmts.empty()) throw SyntaxError("empty statement", 1, 1, "a statement");
  if (stmts.size() > 1) throw SyntaxError("expected a single statement", 1, 1);
  return std::move(stmts.front());
}

Expr parse_expression(std::string_view sql) { return Parser(sql).standalone_expression(); }

}  // namespace flockmtl::sql
