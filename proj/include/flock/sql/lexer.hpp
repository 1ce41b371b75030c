#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace flockmtl::sql {

enum class TokenKind { Keyword, Identifier, String, Number, Operator, Punct, End };

std::string_view token_kind_name(TokenKind kind);

struct Token {
  TokenKind kind = TokenKind::End;
  std::string_view text;  // slice of the source, quotes included
  std::string value;      // keyword in upper case, unquoted identifier/string
  std::size_t offset = 0;
  int line = 1;
  int column = 1;
};

bool is_reserved_keyword(std::string_view upper);

/// Tokenizes the whole input; the last token is End. Throws SyntaxError on bad input.
/// Whitespace and comments are skipped but remain recoverable from token offsets.
std::vector<Token> tokenize_sql(std::string_view source);

}  // namespace flockmtl::sql
