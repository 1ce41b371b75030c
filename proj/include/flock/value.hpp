#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "json.hpp"

namespace flockmtl {

using Json = nlohmann::json;

enum class ValueType { Null, Bool, Int, Double, Text, Json, DoubleArray };

std::string_view value_type_name(ValueType type);

/// Declared column/expression type. `array_length` is set only for DOUBLE[n].
struct TypeSpec {
  ValueType type = ValueType::Null;
  std::optional<std::size_t> array_length;

  bool operator==(const TypeSpec&) const = default;
  std::string to_sql() const;
};

/// Wrapper so JSON documents are a distinct alternative from TEXT.
struct JsonDoc {
  Json doc;
  bool operator==(const JsonDoc& other) const { return doc == other.doc; }
};

/// A single SQL value. NULL is the monostate alternative.
class Value {
 public:
  using Storage =
      std::variant<std::monostate, bool, std::int64_t, double, std::string, JsonDoc, std::vector<double>>;

  Value() = default;

  static Value null() { return Value(); }
  static Value boolean(bool b) { return Value(Storage(b)); }
  static Value integer(std::int64_t i) { return Value(Storage(i)); }
  static Value real(double d) { return Value(Storage(d)); }
  static Value text(std::string s) { return Value(Storage(std::move(s))); }
  static Value json(Json j) { return Value(Storage(JsonDoc{std::move(j)})); }
  static Value array(std::vector<double> values) { return Value(Storage(std::move(values))); }

  ValueType type() const noexcept { return static_cast<ValueType>(storage_.index()); }
  bool is_null() const noexcept { return storage_.index() == 0; }
  bool is_numeric() const noexcept {
    return type() == ValueType::Int || type() == ValueType::Double;
  }

  bool as_bool() const { return std::get<bool>(storage_); }
  std::int64_t as_int() const { return std::get<std::int64_t>(storage_); }
  /// INT or DOUBLE widened to double.
  double as_double() const;
  const std::string& as_text() const { return std::get<std::string>(storage_); }
  const Json& as_json() const { return std::get<JsonDoc>(storage_).doc; }
  const std::vector<double>& as_array() const { return std::get<std::vector<double>>(storage_); }

  /// Human-readable rendering; NULL renders as "NULL".
  std::string to_string() const;
  /// JSON rendering used in result payloads and tuple serialization.
  Json to_json() const;

  const Storage& storage() const noexcept { return storage_; }

  /// Structural equality (NULL == NULL). Not SQL equality.
  bool operator==(const Value& other) const { return storage_ == other.storage_; }

 private:
  explicit Value(Storage s) : storage_(std::move(s)) {}
  Storage storage_;
};

/// SQL comparison. Returns nullopt when either side is NULL.
/// Throws Error(TypeMismatch) for incomparable variants.
std::optional<int> compare_values(const Value& a, const Value& b);

/// Total order for sorting: NULLs compare greater than everything.
int sort_compare(const Value& a, const Value& b);

/// Key usable for hashing/grouping; INT and integral DOUBLE collide on purpose.
std::string group_key(const Value& v);

/// Convert a JSON document element into the closest SQL value.
Value value_from_json(const Json& j);

}  // namespace flockmtl
