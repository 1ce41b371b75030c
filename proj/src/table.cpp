#include "flock/table.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "flock/error.hpp"

namespace flockmtl {

Table::Table(std::string name, std::vector<ColumnDef> columns)
    : name_(std::move(name)), columns_(std::move(columns)), data_(columns_.size()) {
  for (std::size_t i = 0; i < columns_.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (columns_[i].name == columns_[j].name) {
        throw Error(ErrorCode::BindingError, "duplicate column name '" + columns_[i].name + "'");
      }
    }
  }
}

Table Table::from_rows(std::string name, const std::vector<std::string>& column_names,
                       std::vector<std::vector<Value>> rows) {
  std::vector<ColumnDef> defs;
  for (std::size_t c = 0; c < column_names.size(); ++c) {
    ColumnDef def{column_names[c], ValueType::Null};
    for (const auto& r : rows) {
      if (!r[c].is_null()) {
        def.type = r[c].type();
        break;
      }
    }
    defs.push_back(def);
  }
  Table t(std::move(name), std::move(defs));
  for (auto& r : rows) t.append_row(std::move(r));
  return t;
}

std::optional<std::size_t> Table::column_index(std::string_view name) const {
  for (std::size_t i = 0; i < columns_.size(); ++i) {
    if (columns_[i].name == name) return i;
  }
  return std::nullopt;
}

std::vector<Value> Table::row(std::size_t i) const {
  std::vector<Value> out;
  out.reserve(columns_.size());
  for (const auto& col : data_) out.push_back(col[i]);
  return out;
}

void Table::append_row(std::vector<Value> values) {
  if (values.size() != columns_.size()) {
    throw Error(ErrorCode::ExecError, "row has " + std::to_string(values.size()) + " values, table '" + name_ +
                                          "' has " + std::to_string(columns_.size()) + " columns");
  }
  for (std::size_t c = 0; c < values.size(); ++c) data_[c].push_back(std::move(values[c]));
  ++rows_;
}

Json Table::to_json(std::size_t limit) const {
  Json cols = Json::array();
  for (const auto& c : columns_) cols.push_back({{"name", c.name}, {"type", value_type_name(c.type)}});
  Json rows = Json::array();
  for (std::size_t r = 0; r < std::min(limit, rows_); ++r) {
    Json row = Json::array();
    for (const auto& col : data_) row.push_back(col[r].to_json());
    rows.push_back(std::move(row));
  }
  return {{"name", name_}, {"columns", cols}, {"rows", rows}, {"row_count", rows_}};
}

std::vector<CsvRecord> parse_csv(std::string_view text) {
  if (text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);
  std::vector<CsvRecord> records;
  std::size_t i = 0;
  std::size_t line = 1;
  while (i < text.size()) {
    CsvRecord rec;
    rec.line = line;
    std::string field;
    bool quoted = false;
    bool end_of_record = false;
    // A line holding nothing at all is skipped.
    if (text[i] == '\n' || (text[i] == '\r' && i + 1 < text.size() && text[i + 1] == '\n')) {
      i += text[i] == '\r' ? 2 : 1;
      ++line;
      continue;
    }
    while (!end_of_record) {
      if (i < text.size() && text[i] == '"' && field.empty() && !quoted) {
        quoted = true;
        std::size_t start_line = line;
        ++i;
        while (true) {
          if (i >= text.size()) {
            throw Error(ErrorCode::IoError, "unterminated quoted field starting on line " + std::to_string(start_line));
          }
          if (text[i] == '"') {
            if (i + 1 < text.size() && text[i + 1] == '"') {
              field += '"';
              i += 2;
              continue;
            }
            ++i;
            break;
          }
          if (text[i] == '\n') ++line;
          field += text[i++];
        }
      }
      if (i >= text.size()) {
        end_of_record = true;
      } else if (text[i] == ',') {
        ++i;
        rec.fields.push_back(std::move(field));
        rec.quoted.push_back(quoted);
        field.clear();
        quoted = false;
        continue;
      } else if (text[i] == '\n' || text[i] == '\r') {
        i += (text[i] == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ? 2 : 1;
        ++line;
        end_of_record = true;
      } else {
        field += text[i++];
        continue;
      }
      rec.fields.push_back(std::move(field));
      rec.quoted.push_back(quoted);
      field.clear();
      quoted = false;
    }
    records.push_back(std::move(rec));
  }
  return records;
}

namespace {

std::optional<std::int64_t> parse_int(const std::string& s) {
  std::int64_t v = 0;
  const char* begin = s.data();
  if (!s.empty() && s[0] == '+') ++begin;
  auto [ptr, ec] = std::from_chars(begin, s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || begin == s.data() + s.size()) return std::nullopt;
  return v;
}

std::optional<double> parse_double(const std::string& s) {
  if (s.empty()) return std::nullopt;
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || !std::isfinite(v)) return std::nullopt;
  // strtod accepts hex floats and leading blanks; CSV numbers are plain decimals.
  for (char c : s) {
    if (!(std::isdigit(static_cast<unsigned char>(c)) || c == '.' || c == '-' || c == '+' || c == 'e' || c == 'E')) {
      return std::nullopt;
    }
  }
  return v;
}

}  // namespace

Table table_from_csv_text(std::string_view text, const std::string& table_name) {
  auto records = parse_csv(text);
  if (records.empty()) throw Error(ErrorCode::IoError, "CSV input has no header row");
  std::vector<ColumnDef> columns;
  for (const auto& f : records[0].fields) columns.push_back({f, ValueType::Text});
  const std::size_t width = columns.size();

  std::vector<std::vector<std::optional<std::string>>> cells(width);
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& rec = records[r];
    if (rec.fields.size() != width) {
      throw Error(ErrorCode::RaggedRow, "line " + std::to_string(rec.line) + " has " + std::to_string(rec.fields.size()) +
                                            " fields, header has " + std::to_string(width));
    }
    for (std::size_t c = 0; c < width; ++c) {
      if (rec.fields[c].empty()) {
        cells[c].push_back(std::nullopt);
      } else {
        cells[c].push_back(rec.fields[c]);
      }
    }
  }

  std::vector<std::vector<Value>> data(width);
  for (std::size_t c = 0; c < width; ++c) {
    bool any = false, all_int = true, all_double = true;
    for (const auto& cell : cells[c]) {
      if (!cell) continue;
      any = true;
      if (all_int && !parse_int(*cell)) all_int = false;
      if (all_double && !parse_double(*cell)) all_double = false;
    }
    ValueType type = !any ? ValueType::Text : all_int ? ValueType::Int : all_double ? ValueType::Double : ValueType::Text;
    columns[c].type = type;
    for (const auto& cell : cells[c]) {
      if (!cell) {
        data[c].push_back(Value::null());
      } else if (type == ValueType::Int) {
        data[c].push_back(Value::integer(*parse_int(*cell)));
      } else if (type == ValueType::Double) {
        data[c].push_back(Value::real(*parse_double(*cell)));
      } else {
        data[c].push_back(Value::text(*cell));
      }
    }
  }

  Table table(table_name, columns);
  const std::size_t rows = records.size() - 1;
  for (std::size_t r = 0; r < rows; ++r) {
    std::vector<Value> row;
    row.reserve(width);
    for (std::size_t c = 0; c < width; ++c) row.push_back(std::move(data[c][r]));
    table.append_row(std::move(row));
  }
  return table;
}

Table load_csv(const std::filesystem::path& path, const std::string& table_name) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return table_from_csv_text(buf.str(), table_name);
}

}  // namespace flockmtl
