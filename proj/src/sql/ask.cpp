#include "flock/sql/ask.hpp"

#include <algorithm>
#include <set>

#include "flock/error.hpp"
#include "flock/functions.hpp"
#include "flock/sql/parser.hpp"

namespace flockmtl::sql {

std::string schema_ddl(const std::vector<std::pair<std::string, std::vector<ColumnDef>>>& tables) {
  std::string out;
  for (const auto& [name, columns] : tables) {
    out += "CREATE TABLE " + quote_identifier(name) + " (";
    for (std::size_t i = 0; i < columns.size(); ++i) {
      if (i) out += ", ";
      out += quote_identifier(columns[i].name) + " " + std::string(value_type_name(columns[i].type));
    }
    out += ");\n";
  }
  return out;
}

std::string function_reference_card() {
  std::string out;
  for (const auto& f : function_registry()) {
    out += "- " + f.signature;
    if (!f.description.empty()) out += "  -- " + f.description;
    out += "\n";
  }
  return out;
}

std::string build_ask_prompt(std::string_view schema) {
  std::string out;
  out += "You translate questions about a database into one SQL query.\n\n";
  out += "Rules:\n";
  out += "- Answer with a single SELECT statement and nothing else. No explanations.\n";
  out += "- Use only the tables and columns listed under Schema.\n";
  out += "- Use only the functions listed under Functions.\n";
  out += "- Semantic functions take a model map, a prompt map, and a tuple map, for example\n";
  out += "  llm_filter({'model': 'gpt-4o'}, {'prompt': 'Is this about fees?'}, {'text': r.text})\n";
  out += "- WITH, JOIN, GROUP BY, ORDER BY and LIMIT are available; subqueries in expressions are not.\n\n";
  out += "Schema:\n";
  out += schema;
  out += "\nFunctions:\n";
  out += function_reference_card();
  return out;
}

std::string extract_sql(std::string_view response) {
  std::string text(response);
  auto fence = text.find("```");
  if (fence != std::string::npos) {
    auto body = text.find('\n', fence);
    auto close = body == std::string::npos ? std::string::npos : text.find("```", body);
    if (body != std::string::npos) {
      text = text.substr(body + 1, close == std::string::npos ? std::string::npos : close - body - 1);
    }
  }
  auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
  while (!text.empty() && is_space(static_cast<unsigned char>(text.back()))) text.pop_back();
  while (!text.empty() && text.back() == ';') {
    text.pop_back();
    while (!text.empty() && is_space(static_cast<unsigned char>(text.back()))) text.pop_back();
  }
  auto start = std::find_if_not(text.begin(), text.end(), [&](char c) { return is_space(static_cast<unsigned char>(c)); });
  return std::string(start, text.end());
}

namespace {

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

void walk_expr(const Expr& e, std::set<std::string>& out) {
  if (e.kind == ExprKind::Call) out.insert(lower(e.name));
  for (const auto& a : e.args) walk_expr(a, out);
}

void walk_select(const SelectStmt& s, std::set<std::string>& out);

void walk_ref(const TableRef& r, std::set<std::string>& out) {
  if (r.kind == TableRef::Kind::Function) out.insert(lower(r.name));
  for (const auto& c : r.children) walk_ref(c, out);
  if (r.on) walk_expr(*r.on, out);
}

void walk_select(const SelectStmt& s, std::set<std::string>& out) {
  for (const auto& c : s.ctes) walk_select(*c.query, out);
  for (const auto& i : s.items) walk_expr(i.expr, out);
  if (s.from) walk_ref(*s.from, out);
  if (s.where) walk_expr(*s.where, out);
  for (const auto& g : s.group_by) walk_expr(g, out);
  for (const auto& o : s.order_by) walk_expr(o.expr, out);
}

SelectStmt check_candidate(const std::string& sql, const AskValidator& validate) {
  if (sql.empty()) throw Error(ErrorCode::GenerationFailed, "the model returned no SQL");
  Statement stmt = parse(sql);
  auto* select = std::get_if<SelectStmt>(&stmt);
  if (!select) throw Error(ErrorCode::GenerationFailed, "the answer is not a SELECT statement");
  for (const auto& fn : referenced_functions(*select)) {
    if (!find_function(fn)) throw Error(ErrorCode::GenerationFailed, "function '" + fn + "' is not supported");
  }
  if (validate) validate(*select);
  return std::move(*select);
}

}  // namespace

std::vector<std::string> referenced_functions(const SelectStmt& stmt) {
  std::set<std::string> out;
  walk_select(stmt, out);
  return {out.begin(), out.end()};
}

AskResult generate_ask_sql(std::string_view question, std::string_view schema, const ModelResource& model,
                           const ProviderClient& client, const AskValidator& validate) {
  std::string q(question);
  if (q.find_first_not_of(" \t\r\n") == std::string::npos) {
    throw Error(ErrorCode::InvalidDefinition, "ASK needs a non-empty question");
  }
  ChatRequest request;
  request.model_id = model.model_id;
  request.system_text = build_ask_prompt(schema);
  request.user_text = "Question: " + q + "\nSQL:";
  request.params = model.params;
  request.json_mode = false;

  std::string last_error;
  for (int attempt = 1; attempt <= 2; ++attempt) {
    if (attempt == 2) {
      request.user_text = "Question: " + q + "\n\nYour previous answer was rejected: " + last_error +
                          "\nReply with a corrected query only.\nSQL:";
    }
    ChatResponse response = client.chat_complete(request);
    std::string sql = extract_sql(response.text);
    try {
      SelectStmt stmt = check_candidate(sql, validate);
      return {sql, std::move(stmt), attempt};
    } catch (const ProviderError&) {
      throw;
    } catch (const Error& e) {
      last_error = e.what();
    }
  }
  throw Error(ErrorCode::GenerationFailed, "could not generate a valid query: " + last_error);
}

}  // namespace flockmtl::sql
