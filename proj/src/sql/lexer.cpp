#include "flock/sql/lexer.hpp"

#include <algorithm>
#include <array>
#include <cctype>

#include "flock/error.hpp"

namespace flockmtl::sql {

std::string_view token_kind_name(TokenKind kind) {
  switch (kind) {
    case TokenKind::Keyword: return "keyword";
    case TokenKind::Identifier: return "identifier";
    case TokenKind::String: return "string";
    case TokenKind::Number: return "number";
    case TokenKind::Operator: return "operator";
    case TokenKind::Punct: return "punctuation";
    case TokenKind::End: return "end of input";
  }
  return "";
}

namespace {

constexpr std::array<std::string_view, 31> kReserved = {
    "SELECT", "FROM", "WHERE", "GROUP", "ORDER", "BY",    "LIMIT", "WITH",   "AS",     "JOIN", "INNER",
    "FULL",   "OUTER", "CROSS", "ON",   "AND",   "OR",    "NOT",   "IS",     "NULL",   "TRUE", "FALSE",
    "ASC",    "DESC", "OVER",  "CREATE", "UPDATE", "DELETE", "ASK", "DISTINCT", "HAVING"};

bool ident_start(unsigned char c) { return std::isalpha(c) || c == '_' || c >= 0x80; }
bool ident_char(unsigned char c) { return std::isalnum(c) || c == '_' || c == '$' || c >= 0x80; }

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    while (true) {
      skip_trivia();
      if (pos_ >= src_.size()) {
        Token end;
        end.kind = TokenKind::End;
        end.offset = pos_;
        end.line = line_;
        end.column = column_;
        out.push_back(end);
        return out;
      }
      out.push_back(next());
    }
  }

 private:
  char peek(std::size_t ahead = 0) const {
    return pos_ + ahead < src_.size() ? src_[pos_ + ahead] : '\0';
  }

  void advance() {
    unsigned char c = static_cast<unsigned char>(src_[pos_++]);
    if (c == '\n') {
      ++line_;
      column_ = 1;
    } else if ((c & 0xC0) != 0x80) {
      ++column_;
    }
  }

  void skip_trivia() {
    while (pos_ < src_.size()) {
      char c = peek();
      if (std::isspace(static_cast<unsigned char>(c))) {
        advance();
      } else if (c == '-' && peek(1) == '-') {
        while (pos_ < src_.size() && peek() != '\n') advance();
      } else if (c == '/' && peek(1) == '*') {
        int line = line_, column = column_;
        advance();
        advance();
        while (pos_ < src_.size() && !(peek() == '*' && peek(1) == '/')) advance();
        if (pos_ >= src_.size()) throw SyntaxError("unterminated comment", line, column, "*/");
        advance();
        advance();
      } else {
        return;
      }
    }
  }

  Token next() {
    Token t;
    t.offset = pos_;
    t.line = line_;
    t.column = column_;
    unsigned char c = static_cast<unsigned char>(peek());

    if (c == '\'') {
      t.kind = TokenKind::String;
      advance();
      while (true) {
        if (pos_ >= src_.size()) throw SyntaxError("unterminated string literal", t.line, t.column, "'");
        char ch = peek();
        if (ch == '\'') {
          if (peek(1) == '\'') {
            t.value += '\'';
            advance();
            advance();
            continue;
          }
          advance();
          break;
        }
        t.value += ch;
        advance();
      }
    } else if (c == '"') {
      t.kind = TokenKind::Identifier;
      advance();
      while (true) {
        if (pos_ >= src_.size()) throw SyntaxError("unterminated quoted identifier", t.line, t.column, "\"");
        char ch = peek();
        if (ch == '"') {
          if (peek(1) == '"') {
            t.value += '"';
            advance();
            advance();
            continue;
          }
          advance();
          break;
        }
        t.value += ch;
        advance();
      }
      if (t.value.empty()) throw SyntaxError("empty quoted identifier", t.line, t.column);
    } else if (std::isdigit(c) || (c == '.' && std::isdigit(static_cast<unsigned char>(peek(1))))) {
      t.kind = TokenKind::Number;
      while (std::isdigit(static_cast<unsigned char>(peek()))) advance();
      if (peek() == '.' && std::isdigit(static_cast<unsigned char>(peek(1)))) {
        advance();
        while (std::isdigit(static_cast<unsigned char>(peek()))) advance();
      } else if (peek() == '.' && !ident_start(static_cast<unsigned char>(peek(1)))) {
        advance();
      }
      if (peek() == 'e' || peek() == 'E') {
        std::size_t save = pos_;
        int save_line = line_, save_col = column_;
        advance();
        if (peek() == '+' || peek() == '-') advance();
        if (std::isdigit(static_cast<unsigned char>(peek()))) {
          while (std::isdigit(static_cast<unsigned char>(peek()))) advance();
        } else {
          pos_ = save;
          line_ = save_line;
          column_ = save_col;
        }
      }
      if (ident_char(static_cast<unsigned char>(peek()))) {
        throw SyntaxError("malformed number", t.line, t.column);
      }
      t.value = std::string(src_.substr(t.offset, pos_ - t.offset));
    } else if (ident_start(c)) {
      while (pos_ < src_.size() && ident_char(static_cast<unsigned char>(peek()))) advance();
      std::string word(src_.substr(t.offset, pos_ - t.offset));
      std::string upper = word;
      std::transform(upper.begin(), upper.end(), upper.begin(),
                     [](unsigned char ch) { return static_cast<char>(std::toupper(ch)); });
      if (is_reserved_keyword(upper)) {
        t.kind = TokenKind::Keyword;
        t.value = upper;
      } else {
        t.kind = TokenKind::Identifier;
        t.value = word;
      }
    } else {
      static constexpr std::array<std::string_view, 9> two = {"::", ":=", "||", "<=", ">=", "<>", "!=", "==", "=>"};
      std::string_view rest = src_.substr(pos_);
      bool matched = false;
      for (auto op : two) {
        if (rest.substr(0, 2) == op) {
          t.kind = TokenKind::Operator;
          advance();
          advance();
          matched = true;
          break;
        }
      }
      if (!matched) {
        switch (c) {
          case '=': case '<': case '>': case '+': case '-': case '*': case '/': case '%':
            t.kind = TokenKind::Operator;
            break;
          case '(': case ')': case ',': case '.': case ';': case '{': case '}': case '[': case ']': case ':':
            t.kind = TokenKind::Punct;
            break;
          default:
            throw SyntaxError(std::string("unexpected character '") + static_cast<char>(c) + "'", t.line, t.column);
        }
        advance();
      }
      t.value = std::string(src_.substr(t.offset, pos_ - t.offset));
    }
    t.text = src_.substr(t.offset, pos_ - t.offset);
    return t;
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  int line_ = 1;
  int column_ = 1;
};

}  // namespace

bool is_reserved_keyword(std::string_view upper) {
  return std::find(kReserved.begin(), kReserved.end(), upper) != kReserved.end();
}

std::vector<Token> tokenize_sql(std::string_view source) { return Lexer(source).run(); }

}  // namespace flockmtl::sql
