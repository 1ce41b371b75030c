#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "flock/value.hpp"

namespace flockmtl {

struct ColumnDef {
  std::string name;
  ValueType type = ValueType::Text;
  bool operator==(const ColumnDef&) const = default;
};

/// In-memory columnar table.
class Table {
 public:
  Table() = default;
  /// Throws Error(BindingError) on duplicate column names.
  Table(std::string name, std::vector<ColumnDef> columns);

  /// Column types are taken from the first non-NULL value of each column.
  static Table from_rows(std::string name, const std::vector<std::string>& column_names,
                         std::vector<std::vector<Value>> rows);

  const std::string& name() const noexcept { return name_; }
  void set_name(std::string name) { name_ = std::move(name); }
  const std::vector<ColumnDef>& columns() const noexcept { return columns_; }
  std::size_t column_count() const noexcept { return columns_.size(); }
  std::size_t row_count() const noexcept { return rows_; }
  std::optional<std::size_t> column_index(std::string_view name) const;

  const std::vector<Value>& column(std::size_t i) const { return data_[i]; }
  const Value& at(std::size_t row, std::size_t col) const { return data_[col][row]; }
  std::vector<Value> row(std::size_t i) const;
  /// Throws Error(ExecError) when the width does not match.
  void append_row(std::vector<Value> values);

  /// {"name", "columns": [{name, type}], "rows": [[...]], "row_count"}; at most `limit` rows.
  Json to_json(std::size_t limit) const;

 private:
  std::string name_;
  std::vector<ColumnDef> columns_;
  std::vector<std::vector<Value>> data_;
  std::size_t rows_ = 0;
};

/// RFC 4180 records. Throws Error(IoError) on an unterminated quote.
struct CsvRecord {
  std::vector<std::string> fields;
  std::vector<bool> quoted;
  std::size_t line = 0;  // 1-based line where the record starts
};
std::vector<CsvRecord> parse_csv(std::string_view text);

/// Header row required. Types inferred per column as INT, else DOUBLE, else TEXT; empty fields are NULL.
/// Throws Error(IoError) or Error(RaggedRow).
Table load_csv(const std::filesystem::path& path, const std::string& table_name);
Table table_from_csv_text(std::string_view text, const std::string& table_name);

}  // namespace flockmtl
