#include "flock/prompt.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "flock/error.hpp"

namespace flockmtl {

std::string_view format_name(SerializationFormat format) {
  switch (format) {
    case SerializationFormat::Xml: return "XML";
    case SerializationFormat::Json: return "JSON";
    case SerializationFormat::Markdown: return "MARKDOWN";
  }
  return "XML";
}

SerializationFormat parse_format(std::string_view name) {
  std::string upper(name);
  std::transform(upper.begin(), upper.end(), upper.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  if (upper == "XML") return SerializationFormat::Xml;
  if (upper == "JSON") return SerializationFormat::Json;
  if (upper == "MARKDOWN" || upper == "MD") return SerializationFormat::Markdown;
  throw Error(ErrorCode::InvalidOverride, "unknown serialization format '" + std::string(name) + "'");
}

std::string_view function_name(FunctionKind kind) {
  switch (kind) {
    case FunctionKind::Complete: return "llm_complete";
    case FunctionKind::CompleteJson: return "llm_complete_json";
    case FunctionKind::Filter: return "llm_filter";
    case FunctionKind::Embedding: return "llm_embedding";
    case FunctionKind::Reduce: return "llm_reduce";
    case FunctionKind::ReduceJson: return "llm_reduce_json";
    case FunctionKind::Rerank: return "llm_rerank";
    case FunctionKind::First: return "llm_first";
    case FunctionKind::Last: return "llm_last";
  }
  return "";
}

std::string_view contract_name(ContractKind kind) {
  switch (kind) {
    case ContractKind::TextPerTuple: return "TEXT_PER_TUPLE";
    case ContractKind::JsonPerTuple: return "JSON_PER_TUPLE";
    case ContractKind::BoolPerTuple: return "BOOL_PER_TUPLE";
    case ContractKind::SingleText: return "SINGLE_TEXT";
    case ContractKind::SingleJson: return "SINGLE_JSON";
    case ContractKind::Ranking: return "RANKING";
  }
  return "";
}

OutputContract default_contract(FunctionKind kind) {
  switch (kind) {
    case FunctionKind::Complete: return {ContractKind::TextPerTuple, std::nullopt};
    case FunctionKind::CompleteJson: return {ContractKind::JsonPerTuple, std::nullopt};
    case FunctionKind::Filter: return {ContractKind::BoolPerTuple, std::nullopt};
    case FunctionKind::Reduce: return {ContractKind::SingleText, std::nullopt};
    case FunctionKind::ReduceJson: return {ContractKind::SingleJson, std::nullopt};
    case FunctionKind::Rerank:
    case FunctionKind::First:
    case FunctionKind::Last: return {ContractKind::Ranking, std::nullopt};
    case FunctionKind::Embedding: break;
  }
  return {ContractKind::TextPerTuple, std::nullopt};
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

bool is_xml_name(const std::string& s) {
  if (s.empty() || !(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
  if (s.size() >= 3 && (s[0] == 'x' || s[0] == 'X') && (s[1] == 'm' || s[1] == 'M') &&
      (s[2] == 'l' || s[2] == 'L')) {
    return false;
  }
  return std::all_of(s.begin(), s.end(), [](unsigned char c) {
    return std::isalnum(c) || c == '_' || c == '-' || c == '.';
  });
}

std::string xml_escape(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string xml_unescape(std::string_view s) {
  static const std::pair<std::string_view, char> entities[] = {
      {"&amp;", '&'}, {"&lt;", '<'}, {"&gt;", '>'}, {"&quot;", '"'}, {"&apos;", '\''}};
  std::string out;
  for (std::size_t i = 0; i < s.size();) {
    bool matched = false;
    if (s[i] == '&') {
      for (const auto& [entity, ch] : entities) {
        if (s.substr(i, entity.size()) == entity) {
          out += ch;
          i += entity.size();
          matched = true;
          break;
        }
      }
    }
    if (!matched) out += s[i++];
  }
  return out;
}

std::string markdown_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '|': out += "\\|"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      default: out += c;
    }
  }
  return out;
}

std::string markdown_unescape(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '\\' && i + 1 < s.size()) {
      char n = s[++i];
      out += n == 'n' ? '\n' : n == 'r' ? '\r' : n;
    } else {
      out += s[i];
    }
  }
  return out;
}

/// Text form of a value inside XML/Markdown cells.
std::string cell_text(const Value& v) {
  if (v.type() == ValueType::Text) return v.as_text();
  return v.to_string();
}

const Value* field(const Tuple& row, const std::string& key) {
  for (const auto& [k, v] : row) {
    if (k == key) return &v;
  }
  return nullptr;
}

}  // namespace

std::vector<std::string> tuple_schema(std::span<const Tuple> rows) {
  if (rows.empty()) return {};
  std::vector<std::string> schema;
  for (const auto& [k, _] : rows.front()) schema.push_back(k);
  std::vector<std::string> sorted = schema;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw Error(ErrorCode::HeterogeneousRows, "tuple has duplicate column labels");
  }
  for (std::size_t i = 1; i < rows.size(); ++i) {
    std::vector<std::string> keys;
    for (const auto& [k, _] : rows[i]) keys.push_back(k);
    std::sort(keys.begin(), keys.end());
    if (keys != sorted) {
      throw Error(ErrorCode::HeterogeneousRows,
                  "tuple " + std::to_string(i) + " has a different column set");
    }
  }
  return schema;
}

std::string serialize_tuple(const Tuple& row, std::size_t id, const std::vector<std::string>& schema,
                            SerializationFormat format) {
  std::string out;
  switch (format) {
    case SerializationFormat::Xml: {
      out += "<tuple id=\"" + std::to_string(id) + "\">";
      for (const auto& col : schema) {
        const Value* v = field(row, col);
        bool plain = is_xml_name(col);
        std::string open = plain ? col : "field name=\"" + xml_escape(col) + "\"";
        std::string close = plain ? col : "field";
        if (v == nullptr || v->is_null()) {
          out += "<" + open + " null=\"true\"/>";
        } else {
          out += "<" + open + ">" + xml_escape(cell_text(*v)) + "</" + close + ">";
        }
      }
      out += "</tuple>\n";
      break;
    }
    case SerializationFormat::Json: {
      out += "{\"_id\":" + std::to_string(id);
      for (const auto& col : schema) {
        const Value* v = field(row, col);
        out += "," + Json(col).dump() + ":" + (v ? v->to_json() : Json(nullptr)).dump();
      }
      out += "}";
      break;
    }
    case SerializationFormat::Markdown: {
      out += "| " + std::to_string(id);
      for (const auto& col : schema) {
        const Value* v = field(row, col);
        out += " | ";
        out += (v == nullptr || v->is_null()) ? std::string("\\N") : markdown_escape(cell_text(*v));
      }
      out += " |\n";
      break;
    }
  }
  return out;
}

std::string serialization_header(const std::vector<std::string>& schema, SerializationFormat format) {
  switch (format) {
    case SerializationFormat::Xml: return "";
    case SerializationFormat::Json: return "[";
    case SerializationFormat::Markdown: {
      std::string head = "| id";
      std::string rule = "| ---";
      for (const auto& col : schema) {
        head += " | " + markdown_escape(col);
        rule += " | ---";
      }
      return head + " |\n" + rule + " |\n";
    }
  }
  return "";
}

std::string serialization_trailer(SerializationFormat format) {
  return format == SerializationFormat::Json ? "]" : "";
}

std::string_view serialization_separator(SerializationFormat format) {
  return format == SerializationFormat::Json ? "," : "";
}

std::string serialize_tuples(std::span<const Tuple> rows, SerializationFormat format) {
  auto schema = tuple_schema(rows);
  std::string out = serialization_header(schema, format);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (i) out += serialization_separator(format);
    out += serialize_tuple(rows[i], i, schema, format);
  }
  return out + serialization_trailer(format);
}

std::string canonical_tuple(const Tuple& row) {
  std::vector<const std::pair<std::string, Value>*> sorted;
  for (const auto& kv : row) sorted.push_back(&kv);
  std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->first < b->first; });
  std::string out = "{";
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (i) out += ",";
    const Value& v = sorted[i]->second;
    // Type tag keeps TEXT '1' distinct from INT 1 and JSON "1".
    out += Json(sorted[i]->first).dump() + ":[" + std::to_string(static_cast<int>(v.type())) + "," +
           v.to_json().dump() + "]";
  }
  return out + "}";
}

std::int64_t estimate_tokens(std::string_view text) {
  std::int64_t chars = 0;
  for (unsigned char c : text) {
    if ((c & 0xC0) != 0x80) ++chars;  // count UTF-8 code points
  }
  return (chars + 3) / 4;
}

// ---------------------------------------------------------------------------
// Templates

namespace {

const std::set<std::string>& template_slots() {
  static const std::set<std::string> slots = {"user_prompt", "tuples", "contract"};
  return slots;
}

struct TemplatePiece {
  bool slot = false;
  std::string text;  // literal text or slot name
};

std::vector<TemplatePiece> split_template(const std::string& text) {
  std::vector<TemplatePiece> pieces;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto open = text.find("{{", pos);
    if (open == std::string::npos) {
      pieces.push_back({false, text.substr(pos)});
      break;
    }
    if (open > pos) pieces.push_back({false, text.substr(pos, open - pos)});
    auto close = text.find("}}", open + 2);
    if (close == std::string::npos) {
      throw Error(ErrorCode::InvalidTemplate, "unterminated placeholder at offset " + std::to_string(open));
    }
    std::string name = text.substr(open + 2, close - open - 2);
    auto first = name.find_first_not_of(" \t");
    auto last = name.find_last_not_of(" \t");
    name = first == std::string::npos ? "" : name.substr(first, last - first + 1);
    if (!template_slots().count(name)) {
      throw Error(ErrorCode::InvalidTemplate, "unknown placeholder {{" + name + "}}");
    }
    pieces.push_back({true, name});
    pos = close + 2;
  }
  return pieces;
}

}  // namespace

PromptTemplate PromptTemplate::parse(std::string text) {
  auto pieces = split_template(text);
  auto tuple_slots = std::count_if(pieces.begin(), pieces.end(),
                                   [](const auto& p) { return p.slot && p.text == "tuples"; });
  if (tuple_slots > 1) {
    throw Error(ErrorCode::InvalidTemplate, "{{tuples}} may appear at most once");
  }
  PromptTemplate t;
  t.text_ = std::move(text);
  return t;
}

std::pair<std::string, std::string> PromptTemplate::render(std::string_view user_prompt,
                                                           std::string_view contract) const {
  std::string before, after;
  bool seen_tuples = false;
  for (const auto& piece : split_template(text_)) {
    std::string& out = seen_tuples ? after : before;
    if (!piece.slot) {
      out += piece.text;
    } else if (piece.text == "user_prompt") {
      out += user_prompt;
    } else if (piece.text == "contract") {
      out += contract;
    } else {
      seen_tuples = true;
    }
  }
  return {before, after};
}

// ---------------------------------------------------------------------------
// Meta-prompt

namespace {

constexpr std::string_view kBoolMarker = "Each value must be either true or false.";
constexpr std::string_view kJsonMarker = "Each value must itself be valid JSON.";
constexpr std::string_view kSingleTextMarker = "{\"answer\": \"<text>\"}";
constexpr std::string_view kSingleJsonMarker = "{\"answer\": <JSON value>}";
constexpr std::string_view kRankingMarker = "{\"ranking\": [<tuple id>, ...]}";
constexpr std::string_view kAnswersMarker = "{\"answers\": [";

std::string_view task_line(FunctionKind kind) {
  switch (kind) {
    case FunctionKind::Complete:
      return "Apply the instructions to each tuple independently and write a text answer for it.";
    case FunctionKind::CompleteJson:
      return "Apply the instructions to each tuple independently and produce a JSON value for it.";
    case FunctionKind::Filter:
      return "Decide for each tuple independently whether it satisfies the instructions.";
    case FunctionKind::Reduce:
      return "Combine all tuples into a single text answer that follows the instructions.";
    case FunctionKind::ReduceJson:
      return "Combine all tuples into a single JSON value that follows the instructions.";
    case FunctionKind::Rerank:
    case FunctionKind::First:
    case FunctionKind::Last:
      return "Rank the tuples by how relevant they are to the instructions, most relevant first.";
    case FunctionKind::Embedding: break;
  }
  return "";
}

std::string_view format_description(SerializationFormat format) {
  switch (format) {
    case SerializationFormat::Xml:
      return "XML: one <tuple id=\"...\"> element per tuple with one child element per column; "
             "a NULL value is written as an empty element with null=\"true\".";
    case SerializationFormat::Json:
      return "a JSON array: one object per tuple, the tuple id is in the \"_id\" field.";
    case SerializationFormat::Markdown:
      return "a Markdown table: one row per tuple, the tuple id is in the \"id\" column; "
             "\\N marks a NULL value and | inside a cell is escaped as \\|.";
  }
  return "";
}

}  // namespace

std::string contract_instructions(const OutputContract& contract) {
  std::string out;
  switch (contract.kind) {
    case ContractKind::TextPerTuple:
      out = "Return a JSON object of the form {\"answers\": [{\"id\": <tuple id>, \"value\": \"<text>\"}, "
            "...]} with exactly one entry per tuple id.";
      break;
    case ContractKind::JsonPerTuple:
      out = "Return a JSON object of the form {\"answers\": [{\"id\": <tuple id>, \"value\": <JSON "
            "value>}, ...]} with exactly one entry per tuple id. " +
            std::string(kJsonMarker);
      break;
    case ContractKind::BoolPerTuple:
      out = "Return a JSON object of the form {\"answers\": [{\"id\": <tuple id>, \"value\": true}, "
            "...]} with exactly one entry per tuple id. " +
            std::string(kBoolMarker);
      break;
    case ContractKind::SingleText:
      out = "Return a JSON object of the form " + std::string(kSingleTextMarker) +
            " holding one answer for all tuples together.";
      break;
    case ContractKind::SingleJson:
      out = "Return a JSON object of the form " + std::string(kSingleJsonMarker) +
            " holding one answer for all tuples together.";
      break;
    case ContractKind::Ranking:
      out = "Return a JSON object of the form " + std::string(kRankingMarker) +
            " listing every tuple id exactly once, most relevant first.";
      break;
  }
  if (contract.schema_hint) out += " Each value must follow this shape: " + *contract.schema_hint;
  return out;
}

std::optional<ContractKind> detect_contract(std::string_view text) {
  auto has = [&](std::string_view needle) { return text.find(needle) != std::string_view::npos; };
  if (has(kRankingMarker)) return ContractKind::Ranking;
  if (has(kSingleTextMarker)) return ContractKind::SingleText;
  if (has(kSingleJsonMarker)) return ContractKind::SingleJson;
  if (has(kBoolMarker)) return ContractKind::BoolPerTuple;
  if (has(kJsonMarker)) return ContractKind::JsonPerTuple;
  if (has(kAnswersMarker)) return ContractKind::TextPerTuple;
  return std::nullopt;
}

std::string build_static_prefix(FunctionKind kind, std::string_view user_prompt,
                                const std::vector<std::string>& schema, SerializationFormat format,
                                const OutputContract& contract,
                                const PromptTemplate* override_template) {
  if (override_template != nullptr) {
    return override_template->render(user_prompt, contract_instructions(contract)).first;
  }
  std::string columns;
  for (std::size_t i = 0; i < schema.size(); ++i) {
    if (i) columns += ", ";
    columns += schema[i];
  }
  std::string out;
  out += "You are a data-processing assistant embedded in a SQL engine.\n";
  out += task_line(kind);
  out += "\n\n### Instructions\n";
  out += user_prompt;
  out += "\n\n### Input\nThe tuples are serialized as ";
  out += format_description(format);
  out += "\nColumns: " + (columns.empty() ? std::string("(none)") : columns) + "\n";
  out += "\n### Response\n";
  out += contract_instructions(contract);
  out += "\nReply with that JSON object only. Do not add explanations.\n";
  out += "\n### Tuples\n";
  return out;
}

RenderedPrompt build_meta_prompt(FunctionKind kind, std::string_view user_prompt,
                                 std::span<const Tuple> rows, SerializationFormat format,
                                 const OutputContract& contract,
                                 const PromptTemplate* override_template) {
  auto schema = tuple_schema(rows);
  RenderedPrompt p;
  p.static_prefix = build_static_prefix(kind, user_prompt, schema, format, contract, override_template);
  p.dynamic_suffix = serialize_tuples(rows, format);
  if (override_template != nullptr) {
    p.dynamic_suffix += override_template->render(user_prompt, contract_instructions(contract)).second;
  }
  p.estimated_tokens = estimate_tokens(p.static_prefix) + estimate_tokens(p.dynamic_suffix);
  return p;
}

// ---------------------------------------------------------------------------
// Response parsing

namespace {

std::optional<Json> extract_object(std::string_view response) {
  auto open = response.find('{');
  auto close = response.rfind('}');
  if (open == std::string_view::npos || close == std::string_view::npos || close < open) {
    return std::nullopt;
  }
  try {
    Json j = Json::parse(response.substr(open, close - open + 1));
    if (!j.is_object()) return std::nullopt;
    return j;
  } catch (const Json::exception&) {
    return std::nullopt;
  }
}

std::optional<std::size_t> as_id(const Json& j) {
  if (j.is_number_unsigned()) return j.get<std::size_t>();
  if (j.is_number_integer()) {
    auto v = j.get<std::int64_t>();
    if (v < 0) return std::nullopt;
    return static_cast<std::size_t>(v);
  }
  if (j.is_string()) {
    const auto& s = j.get_ref<const std::string&>();
    if (s.empty() || !std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); })) {
      return std::nullopt;
    }
    return static_cast<std::size_t>(std::stoull(s));
  }
  return std::nullopt;
}

}  // namespace

std::optional<std::map<std::size_t, Json>> parse_tuple_answers(std::string_view response) {
  auto obj = extract_object(response);
  if (!obj || !obj->contains("answers") || !(*obj)["answers"].is_array()) return std::nullopt;
  std::map<std::size_t, Json> out;
  for (const auto& entry : (*obj)["answers"]) {
    if (!entry.is_object() || !entry.contains("id") || !entry.contains("value")) return std::nullopt;
    auto id = as_id(entry["id"]);
    if (!id) return std::nullopt;
    out.emplace(*id, entry["value"]);
  }
  return out;
}

std::optional<Json> parse_single_answer(std::string_view response) {
  auto obj = extract_object(response);
  if (!obj || !obj->contains("answer")) return std::nullopt;
  return (*obj)["answer"];
}

std::optional<std::vector<std::size_t>> parse_ranking(std::string_view response) {
  auto obj = extract_object(response);
  if (!obj || !obj->contains("ranking") || !(*obj)["ranking"].is_array()) return std::nullopt;
  std::vector<std::size_t> ids;
  for (const auto& e : (*obj)["ranking"]) {
    auto id = as_id(e);
    if (!id) return std::nullopt;
    ids.push_back(*id);
  }
  return ids;
}

// ---------------------------------------------------------------------------
// Tuple recovery

namespace {

std::vector<SerializedTuple> parse_xml_tuples(std::string_view text) {
  std::vector<SerializedTuple> out;
  constexpr std::string_view open_tag = "<tuple id=\"";
  std::size_t pos = 0;
  while ((pos = text.find(open_tag, pos)) != std::string_view::npos) {
    auto id_end = text.find('"', pos + open_tag.size());
    auto body_start = text.find('>', id_end);
    auto body_end = text.find("</tuple>", body_start);
    if (id_end == std::string_view::npos || body_start == std::string_view::npos ||
        body_end == std::string_view::npos) {
      break;
    }
    SerializedTuple t;
    t.id = std::stoull(std::string(text.substr(pos + open_tag.size(), id_end - pos - open_tag.size())));
    std::string_view body = text.substr(body_start + 1, body_end - body_start - 1);
    std::size_t i = 0;
    while ((i = body.find('<', i)) != std::string_view::npos) {
      auto tag_end = body.find('>', i);
      if (tag_end == std::string_view::npos) break;
      std::string_view tag = body.substr(i + 1, tag_end - i - 1);
      bool self_closing = !tag.empty() && tag.back() == '/';
      if (self_closing) tag.remove_suffix(1);
      std::string name;
      std::string close_name;
      if (tag.rfind("field name=\"", 0) == 0) {
        auto q = tag.find('"', 12);
        name = xml_unescape(tag.substr(12, q - 12));
        close_name = "field";
      } else {
        name = std::string(tag.substr(0, tag.find(' ')));
        close_name = name;
      }
      if (self_closing) {
        t.fields[name] = nullptr;
        i = tag_end + 1;
        continue;
      }
      std::string closing = "</" + close_name + ">";
      auto value_end = body.find(closing, tag_end + 1);
      if (value_end == std::string_view::npos) break;
      t.fields[name] = xml_unescape(body.substr(tag_end + 1, value_end - tag_end - 1));
      i = value_end + closing.size();
    }
    out.push_back(std::move(t));
    pos = body_end;
  }
  return out;
}

std::vector<std::string> split_markdown_row(std::string_view line) {
  std::vector<std::string> cells;
  std::string current;
  // Skip the leading pipe.
  std::size_t i = line.find('|');
  if (i == std::string_view::npos) return cells;
  for (++i; i < line.size(); ++i) {
    char c = line[i];
    if (c == '\\' && i + 1 < line.size()) {
      current += c;
      current += line[++i];
    } else if (c == '|') {
      auto first = current.find_first_not_of(' ');
      auto last = current.find_last_not_of(' ');
      cells.push_back(first == std::string::npos ? "" : current.substr(first, last - first + 1));
      current.clear();
    } else {
      current += c;
    }
  }
  return cells;
}

std::vector<SerializedTuple> parse_markdown_tuples(std::string_view text) {
  std::vector<SerializedTuple> out;
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    auto line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    if (!line.empty() && line.front() == '|') lines.push_back(line);
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
  if (lines.size() < 2) return out;
  auto header = split_markdown_row(lines[0]);
  for (std::size_t r = 2; r < lines.size(); ++r) {
    auto cells = split_markdown_row(lines[r]);
    if (cells.size() != header.size() || cells.empty()) continue;
    SerializedTuple t;
    t.id = std::stoull(cells[0]);
    for (std::size_t c = 1; c < cells.size(); ++c) {
      auto key = markdown_unescape(header[c]);
      if (cells[c] == "\\N") {
        t.fields[key] = nullptr;
      } else {
        t.fields[key] = markdown_unescape(cells[c]);
      }
    }
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<SerializedTuple> parse_json_tuples(std::string_view text) {
  std::vector<SerializedTuple> out;
  auto open = text.find("[{\"_id\":");
  if (open == std::string_view::npos) return out;
  // The array ends at the matching bracket; let the parser find it by trying candidate ends.
  for (auto close = text.find(']', open); close != std::string_view::npos;
       close = text.find(']', close + 1)) {
    Json arr = Json::parse(text.substr(open, close - open + 1), nullptr, false);
    if (arr.is_discarded() || !arr.is_array()) continue;
    for (auto& obj : arr) {
      SerializedTuple t;
      t.id = obj.at("_id").get<std::size_t>();
      obj.erase("_id");
      t.fields = obj;
      out.push_back(std::move(t));
    }
    return out;
  }
  return out;
}

}  // namespace

std::vector<SerializedTuple> parse_serialized_tuples(std::string_view text) {
  if (text.find("<tuple id=\"") != std::string_view::npos) return parse_xml_tuples(text);
  if (text.find("[{\"_id\":") != std::string_view::npos) return parse_json_tuples(text);
  if (text.find("| id") != std::string_view::npos) return parse_markdown_tuples(text);
  return {};
}

}  // namespace flockmtl
