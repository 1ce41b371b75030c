#include "flock/value.hpp"

#include <cmath>
#include <sstream>

#include "flock/error.hpp"

namespace flockmtl {

std::string_view value_type_name(ValueType type) {
  switch (type) {
    case ValueType::Null: return "NULL";
    case ValueType::Bool: return "BOOLEAN";
    case ValueType::Int: return "INTEGER";
    case ValueType::Double: return "DOUBLE";
    case ValueType::Text: return "TEXT";
    case ValueType::Json: return "JSON";
    case ValueType::DoubleArray: return "DOUBLE[]";
  }
  return "?";
}

std::string TypeSpec::to_sql() const {
  if (type == ValueType::DoubleArray) {
    return array_length ? "DOUBLE[" + std::to_string(*array_length) + "]" : "DOUBLE[]";
  }
  return std::string(value_type_name(type));
}

double Value::as_double() const {
  if (type() == ValueType::Int) return static_cast<double>(as_int());
  return std::get<double>(storage_);
}

namespace {

std::string format_double(double d) {
  if (std::isnan(d)) return "nan";
  if (std::isinf(d)) return d > 0 ? "inf" : "-inf";
  std::ostringstream out;
  out.precision(17);
  out << d;
  std::string s = out.str();
  // Prefer the shortest representation that round-trips.
  for (int p = 1; p < 17; ++p) {
    std::ostringstream shorter;
    shorter.precision(p);
    shorter << d;
    if (std::stod(shorter.str()) == d) return shorter.str();
  }
  return s;
}

}  // namespace

std::string Value::to_string() const {
  switch (type()) {
    case ValueType::Null: return "NULL";
    case ValueType::Bool: return as_bool() ? "true" : "false";
    case ValueType::Int: return std::to_string(as_int());
    case ValueType::Double: return format_double(std::get<double>(storage_));
    case ValueType::Text: return as_text();
    case ValueType::Json: return as_json().dump();
    case ValueType::DoubleArray: {
      std::string out = "[";
      const auto& xs = as_array();
      for (std::size_t i = 0; i < xs.size(); ++i) {
        if (i) out += ", ";
        out += format_double(xs[i]);
      }
      return out + "]";
    }
  }
  return {};
}

Json Value::to_json() const {
  switch (type()) {
    case ValueType::Null: return nullptr;
    case ValueType::Bool: return as_bool();
    case ValueType::Int: return as_int();
    case ValueType::Double: return std::get<double>(storage_);
    case ValueType::Text: return as_text();
    case ValueType::Json: return as_json();
    case ValueType::DoubleArray: return as_array();
  }
  return nullptr;
}

std::optional<int> compare_values(const Value& a, const Value& b) {
  if (a.is_null() || b.is_null()) return std::nullopt;
  auto sign = [](auto x, auto y) { return x < y ? -1 : (y < x ? 1 : 0); };
  if (a.is_numeric() && b.is_numeric()) {
    if (a.type() == ValueType::Int && b.type() == ValueType::Int) return sign(a.as_int(), b.as_int());
    return sign(a.as_double(), b.as_double());
  }
  if (a.type() != b.type()) {
    throw Error(ErrorCode::TypeMismatch, "cannot compare " + std::string(value_type_name(a.type())) +
                                             " with " + std::string(value_type_name(b.type())));
  }
  switch (a.type()) {
    case ValueType::Bool: return sign(a.as_bool(), b.as_bool());
    case ValueType::Text: return sign(a.as_text().compare(b.as_text()), 0);
    case ValueType::Json: return sign(a.as_json().dump().compare(b.as_json().dump()), 0);
    case ValueType::DoubleArray: return sign(a.as_array(), b.as_array());
    default: break;
  }
  return 0;
}

int sort_compare(const Value& a, const Value& b) {
  if (a.is_null() && b.is_null()) return 0;
  if (a.is_null()) return 1;
  if (b.is_null()) return -1;
  return *compare_values(a, b);
}

std::string group_key(const Value& v) {
  switch (v.type()) {
    case ValueType::Null: return "N";
    case ValueType::Bool: return v.as_bool() ? "B1" : "B0";
    case ValueType::Int: return "D" + format_double(static_cast<double>(v.as_int()));
    case ValueType::Double: return "D" + format_double(v.as_double());
    case ValueType::Text: return "T" + v.as_text();
    case ValueType::Json: return "J" + v.as_json().dump();
    case ValueType::DoubleArray: return "A" + v.to_string();
  }
  return {};
}

Value value_from_json(const Json& j) {
  if (j.is_null()) return Value::null();
  if (j.is_boolean()) return Value::boolean(j.get<bool>());
  if (j.is_number_integer()) return Value::integer(j.get<std::int64_t>());
  if (j.is_number()) return Value::real(j.get<double>());
  if (j.is_string()) return Value::text(j.get<std::string>());
  return Value::json(j);
}

}  // namespace flockmtl
