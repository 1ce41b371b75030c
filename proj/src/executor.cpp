#include "flock/executor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <unordered_map>

#include "flock/error.hpp"
#include "flock/functions.hpp"
#include "flock/sql/binder.hpp"

namespace flockmtl {

// ---- overrides ---------------------------------------------------------------

NodeOverride ExecOverrides::for_node(int node_id) const {
  NodeOverride out = global;
  auto it = per_node.find(node_id);
  if (it != per_node.end()) {
    if (it->second.batch_mode) out.batch_mode = it->second.batch_mode;
    if (it->second.format) out.format = it->second.format;
    if (it->second.prompt_template) out.prompt_template = it->second.prompt_template;
    if (it->second.use_cache) out.use_cache = it->second.use_cache;
  }
  return out;
}

LlmCall ExecOverrides::apply(int node_id, LlmCall call) const {
  NodeOverride o = for_node(node_id);
  if (o.batch_mode) call.batch_mode = *o.batch_mode;
  if (o.format) call.format = *o.format;
  if (o.prompt_template) call.prompt_template = *o.prompt_template;
  if (o.use_cache) call.use_cache = *o.use_cache;
  return call;
}

namespace {

NodeOverride override_from_json(const Json& j, bool allow_nodes) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidOverride, "overrides must be a JSON object");
  NodeOverride o;
  for (const auto& [key, value] : j.items()) {
    if (value.is_null()) continue;
    if (key == "batch_mode" || key == "batch_size") {
      o.batch_mode = BatchMode::from_json(value);
    } else if (key == "serialization_format" || key == "format") {
      if (!value.is_string()) throw Error(ErrorCode::InvalidOverride, key + " must be a string");
      o.format = parse_format(value.get<std::string>());
    } else if (key == "prompt_template") {
      if (!value.is_string()) throw Error(ErrorCode::InvalidOverride, "prompt_template must be a string");
      o.prompt_template = PromptTemplate::parse(value.get<std::string>());
    } else if (key == "cache") {
      if (!value.is_boolean()) throw Error(ErrorCode::InvalidOverride, "cache must be true or false");
      o.use_cache = value.get<bool>();
    } else if (!(allow_nodes && key == "nodes")) {
      throw Error(ErrorCode::InvalidOverride, "unknown override '" + key + "'");
    }
  }
  return o;
}

Json override_to_json(const NodeOverride& o) {
  Json j = Json::object();
  if (o.batch_mode) {
    if (o.batch_mode->is_auto()) {
      j["batch_mode"] = "auto";
    } else {
      j["batch_mode"] = o.batch_mode->size();
    }
  }
  if (o.format) j["serialization_format"] = format_name(*o.format);
  if (o.prompt_template) j["prompt_template"] = o.prompt_template->text();
  if (o.use_cache) j["cache"] = *o.use_cache;
  return j;
}

}  // namespace

ExecOverrides ExecOverrides::from_json(const Json& j) {
  ExecOverrides out;
  if (j.is_null()) return out;
  out.global = override_from_json(j, true);
  if (j.contains("nodes") && !j["nodes"].is_null()) {
    const Json& nodes = j["nodes"];
    if (!nodes.is_object()) throw Error(ErrorCode::InvalidOverride, "nodes must map node ids to overrides");
    for (const auto& [key, value] : nodes.items()) {
      char* end = nullptr;
      long id = std::strtol(key.c_str(), &end, 10);
      if (key.empty() || *end != '\0' || id < 0) {
        throw Error(ErrorCode::InvalidOverride, "node id '" + key + "' is not a non-negative integer");
      }
      out.per_node[static_cast<int>(id)] = override_from_json(value, false);
    }
  }
  return out;
}

Json ExecOverrides::to_json() const {
  Json j = override_to_json(global);
  if (!per_node.empty()) {
    Json nodes = Json::object();
    for (const auto& [id, o] : per_node) nodes[std::to_string(id)] = override_to_json(o);
    j["nodes"] = nodes;
  }
  return j;
}

// ---- results -----------------------------------------------------------------

std::vector<ValueType> QueryResult::column_types() const {
  std::vector<ValueType> types(column_names.size(), ValueType::Null);
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < types.size() && c < row.size(); ++c) {
      if (types[c] == ValueType::Null && !row[c].is_null()) types[c] = row[c].type();
    }
  }
  return types;
}

std::size_t QueryResult::provider_calls() const {
  std::size_t n = 0;
  for (const auto& [id, s] : stats) {
    if (s.inference) n += s.inference->provider_calls;
  }
  return n;
}

Json QueryResult::to_json() const {
  Json cols = Json::array();
  auto types = column_types();
  for (std::size_t i = 0; i < column_names.size(); ++i) {
    cols.push_back({{"name", column_names[i]}, {"type", value_type_name(types[i])}});
  }
  Json out_rows = Json::array();
  for (const auto& row : rows) {
    Json r = Json::array();
    for (const auto& v : row) r.push_back(v.to_json());
    out_rows.push_back(std::move(r));
  }
  Json out = {{"columns", cols},
              {"rows", out_rows},
              {"row_count", rows.size()},
              {"wall_time_ms", static_cast<double>(wall_time.count()) / 1000.0}};
  if (generated_sql) out["generated_sql"] = *generated_sql;
  return out;
}

// ---- expressions -------------------------------------------------------------

namespace {

[[noreturn]] void type_error(const std::string& what) { throw Error(ErrorCode::TypeMismatch, what); }

std::string type_of(const Value& v) { return std::string(value_type_name(v.type())); }

std::string lower_ascii(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::optional<bool> truth(const Value& v, std::string_view op) {
  if (v.is_null()) return std::nullopt;
  if (v.type() != ValueType::Bool) type_error(std::string(op) + " needs BOOLEAN operands, got " + type_of(v));
  return v.as_bool();
}

Value arithmetic(const std::string& op, const Value& a, const Value& b) {
  if (a.is_null() || b.is_null()) return Value::null();
  if (!a.is_numeric() || !b.is_numeric()) {
    type_error("operator " + op + " is not defined for " + type_of(a) + " and " + type_of(b));
  }
  if (op == "/") {
    double d = b.as_double();
    if (d == 0.0) return Value::null();
    return Value::real(a.as_double() / d);
  }
  if (a.type() == ValueType::Int && b.type() == ValueType::Int) {
    std::int64_t x = a.as_int(), y = b.as_int(), r = 0;
    bool overflow = false;
    if (op == "+") {
      overflow = __builtin_add_overflow(x, y, &r);
    } else if (op == "-") {
      overflow = __builtin_sub_overflow(x, y, &r);
    } else if (op == "*") {
      overflow = __builtin_mul_overflow(x, y, &r);
    } else {
      if (y == 0) return Value::null();
      if (x == INT64_MIN && y == -1) return Value::integer(0);
      r = x % y;
    }
    if (overflow) throw Error(ErrorCode::DomainError, "integer overflow in " + op);
    return Value::integer(r);
  }
  double x = a.as_double(), y = b.as_double();
  if (op == "+") return Value::real(x + y);
  if (op == "-") return Value::real(x - y);
  if (op == "*") return Value::real(x * y);
  if (y == 0.0) return Value::null();
  return Value::real(std::fmod(x, y));
}

Value comparison(const std::string& op, const Value& a, const Value& b) {
  auto c = compare_values(a, b);
  if (!c) return Value::null();
  if (op == "=" || op == "==") return Value::boolean(*c == 0);
  if (op == "<>" || op == "!=") return Value::boolean(*c != 0);
  if (op == "<") return Value::boolean(*c < 0);
  if (op == "<=") return Value::boolean(*c <= 0);
  if (op == ">") return Value::boolean(*c > 0);
  return Value::boolean(*c >= 0);
}

std::string text_of(const Value& v) {
  if (v.type() == ValueType::Text) return v.as_text();
  if (v.type() == ValueType::Json || v.type() == ValueType::DoubleArray) return v.to_json().dump();
  return v.to_string();
}

std::optional<double> number_or_null(const Value& v, const std::string& fn) {
  if (v.is_null()) return std::nullopt;
  if (!v.is_numeric()) type_error(fn + " expects numeric arguments, got " + type_of(v));
  return v.as_double();
}

std::vector<double> to_vector(const Value& v, const std::string& fn) {
  if (v.type() == ValueType::DoubleArray) return v.as_array();
  Json j;
  if (v.type() == ValueType::Json) {
    j = v.as_json();
  } else if (v.type() == ValueType::Text) {
    j = Json::parse(v.as_text(), nullptr, false);
  }
  if (!j.is_array()) type_error(fn + " expects DOUBLE[] arguments, got " + type_of(v));
  std::vector<double> out;
  for (const auto& x : j) {
    if (!x.is_number()) type_error(fn + ": array element is not a number");
    out.push_back(x.get<double>());
  }
  return out;
}

Value json_extract(const Value& doc, const Value& path) {
  if (doc.is_null() || path.is_null()) return Value::null();
  if (path.type() != ValueType::Text) type_error("json_extract path must be TEXT");
  Json j;
  if (doc.type() == ValueType::Json) {
    j = doc.as_json();
  } else if (doc.type() == ValueType::Text) {
    j = Json::parse(doc.as_text(), nullptr, false);
    if (j.is_discarded()) return Value::null();
  } else {
    type_error("json_extract expects JSON or TEXT, got " + type_of(doc));
  }
  std::string p = path.as_text();
  std::size_t i = 0;
  if (!p.empty() && p[0] == '$') i = 1;
  const Json* cur = &j;
  while (i < p.size()) {
    if (p[i] == '.') {
      ++i;
      continue;
    }
    if (p[i] == '[') {
      auto close = p.find(']', i);
      if (close == std::string::npos) throw Error(ErrorCode::DomainError, "bad JSON path '" + p + "'");
      std::string inner = p.substr(i + 1, close - i - 1);
      i = close + 1;
      if (!inner.empty() && (inner.front() == '\'' || inner.front() == '"')) {
        std::string key = inner.substr(1, inner.size() >= 2 ? inner.size() - 2 : 0);
        if (!cur->is_object() || !cur->contains(key)) return Value::null();
        cur = &(*cur)[key];
        continue;
      }
      char* end = nullptr;
      long idx = std::strtol(inner.c_str(), &end, 10);
      if (inner.empty() || *end != '\0') throw Error(ErrorCode::DomainError, "bad JSON path '" + p + "'");
      if (!cur->is_array() || idx < 0 || static_cast<std::size_t>(idx) >= cur->size()) return Value::null();
      cur = &(*cur)[static_cast<std::size_t>(idx)];
      continue;
    }
    auto stop = p.find_first_of(".[", i);
    std::string key = p.substr(i, stop == std::string::npos ? std::string::npos : stop - i);
    i = stop == std::string::npos ? p.size() : stop;
    if (!cur->is_object() || !cur->contains(key)) return Value::null();
    cur = &(*cur)[key];
  }
  return value_from_json(*cur);
}

std::size_t utf8_length(const std::string& s) {
  std::size_t n = 0;
  for (unsigned char c : s) {
    if ((c & 0xC0) != 0x80) ++n;
  }
  return n;
}

Value call_builtin(const std::string& fn, const std::vector<Value>& args) {
  if (fn == "fusion" || fn.rfind("fusion_", 0) == 0) {
    FusionMethod method = FusionMethod::CombSum;
    if (fn != "fusion") {
      auto m = parse_fusion_method(fn.substr(7));
      if (!m) throw Error(ErrorCode::BindingError, "unknown fusion method " + fn);
      method = *m;
    }
    std::vector<std::optional<double>> inputs;
    for (const auto& a : args) inputs.push_back(number_or_null(a, fn));
    auto r = fusion(method, inputs);
    return r ? Value::real(*r) : Value::null();
  }
  if (fn == "array_cosine_similarity") {
    if (args[0].is_null() || args[1].is_null()) return Value::null();
    auto a = to_vector(args[0], fn);
    auto b = to_vector(args[1], fn);
    return Value::real(cosine_similarity(a, b));
  }
  if (fn == "coalesce") {
    for (const auto& a : args) {
      if (!a.is_null()) return a;
    }
    return Value::null();
  }
  if (fn == "concat") {
    std::string out;
    for (const auto& a : args) {
      if (!a.is_null()) out += text_of(a);
    }
    return Value::text(out);
  }
  if (fn == "json_extract") return json_extract(args[0], args[1]);
  if (args[0].is_null()) return Value::null();
  if (fn == "lower" || fn == "upper" || fn == "length") {
    if (args[0].type() != ValueType::Text) type_error(fn + " expects TEXT, got " + type_of(args[0]));
    std::string s = args[0].as_text();
    if (fn == "length") return Value::integer(static_cast<std::int64_t>(utf8_length(s)));
    for (auto& c : s) {
      c = static_cast<char>(fn == "lower" ? std::tolower(static_cast<unsigned char>(c))
                                          : std::toupper(static_cast<unsigned char>(c)));
    }
    return Value::text(s);
  }
  if (fn == "abs") {
    if (args[0].type() == ValueType::Int) {
      if (args[0].as_int() == INT64_MIN) throw Error(ErrorCode::DomainError, "integer overflow in abs");
      return Value::integer(std::llabs(args[0].as_int()));
    }
    if (args[0].type() == ValueType::Double) return Value::real(std::fabs(args[0].as_double()));
    type_error("abs expects a number, got " + type_of(args[0]));
  }
  if (fn == "round") {
    std::int64_t digits = 0;
    if (args.size() == 2) {
      if (args[1].is_null()) return Value::null();
      if (args[1].type() != ValueType::Int) type_error("round digits must be INTEGER");
      digits = args[1].as_int();
    }
    if (!args[0].is_numeric()) type_error("round expects a number, got " + type_of(args[0]));
    double scale = std::pow(10.0, static_cast<double>(digits));
    return Value::real(std::round(args[0].as_double() * scale) / scale);
  }
  throw Error(ErrorCode::BindingError, "unknown function " + fn);
}

std::optional<std::int64_t> parse_int(const std::string& s) {
  std::string t = trim(s);
  if (t.empty()) return std::nullopt;
  char* end = nullptr;
  errno = 0;
  long long v = std::strtoll(t.c_str(), &end, 10);
  if (*end != '\0' || errno == ERANGE) return std::nullopt;
  return v;
}

std::optional<double> parse_double(const std::string& s) {
  std::string t = trim(s);
  if (t.empty()) return std::nullopt;
  char* end = nullptr;
  double v = std::strtod(t.c_str(), &end);
  if (*end != '\0') return std::nullopt;
  return v;
}

[[noreturn]] void cast_error(const Value& v, const TypeSpec& type) {
  std::string shown = text_of(v);
  if (shown.size() > 40) shown = shown.substr(0, 40) + "...";
  type_error("cannot cast " + type_of(v) + " '" + shown + "' to " + type.to_sql());
}

}  // namespace

Value cast_value(const Value& v, const TypeSpec& type) {
  if (v.is_null()) return v;
  switch (type.type) {
    case ValueType::Null:
      return Value::null();
    case ValueType::Bool:
      switch (v.type()) {
        case ValueType::Bool: return v;
        case ValueType::Int: return Value::boolean(v.as_int() != 0);
        case ValueType::Text: {
          auto t = lower_ascii(trim(v.as_text()));
          if (t == "true" || t == "t" || t == "1") return Value::boolean(true);
          if (t == "false" || t == "f" || t == "0") return Value::boolean(false);
          break;
        }
        case ValueType::Json:
          if (v.as_json().is_boolean()) return Value::boolean(v.as_json().get<bool>());
          break;
        default: break;
      }
      cast_error(v, type);
    case ValueType::Int:
      switch (v.type()) {
        case ValueType::Int: return v;
        case ValueType::Bool: return Value::integer(v.as_bool() ? 1 : 0);
        case ValueType::Double: {
          double d = v.as_double();
          if (!std::isfinite(d) || std::fabs(d) >= 9.2e18) cast_error(v, type);
          return Value::integer(std::llround(d));
        }
        case ValueType::Text: {
          if (auto i = parse_int(v.as_text())) return Value::integer(*i);
          if (auto d = parse_double(v.as_text()); d && std::isfinite(*d) && std::fabs(*d) < 9.2e18) {
            return Value::integer(std::llround(*d));
          }
          break;
        }
        case ValueType::Json:
          if (v.as_json().is_number()) return cast_value(value_from_json(v.as_json()), type);
          break;
        default: break;
      }
      cast_error(v, type);
    case ValueType::Double:
      switch (v.type()) {
        case ValueType::Int:
        case ValueType::Double: return Value::real(v.as_double());
        case ValueType::Bool: return Value::real(v.as_bool() ? 1.0 : 0.0);
        case ValueType::Text:
          if (auto d = parse_double(v.as_text())) return Value::real(*d);
          break;
        case ValueType::Json:
          if (v.as_json().is_number()) return Value::real(v.as_json().get<double>());
          break;
        default: break;
      }
      cast_error(v, type);
    case ValueType::Text:
      return Value::text(text_of(v));
    case ValueType::Json:
      if (v.type() == ValueType::Json) return v;
      if (v.type() == ValueType::Text) {
        Json j = Json::parse(v.as_text(), nullptr, false);
        if (j.is_discarded()) cast_error(v, type);
        return Value::json(std::move(j));
      }
      return Value::json(v.to_json());
    case ValueType::DoubleArray: {
      std::vector<double> xs;
      if (v.type() == ValueType::DoubleArray) {
        xs = v.as_array();
      } else if (v.type() == ValueType::Text || v.type() == ValueType::Json) {
        Json j = v.type() == ValueType::Json ? v.as_json() : Json::parse(v.as_text(), nullptr, false);
        if (!j.is_array()) cast_error(v, type);
        for (const auto& x : j) {
          if (!x.is_number()) cast_error(v, type);
          xs.push_back(x.get<double>());
        }
      } else {
        cast_error(v, type);
      }
      if (type.array_length && xs.size() != *type.array_length) {
        throw Error(ErrorCode::DimensionMismatch, "cannot cast an array of length " + std::to_string(xs.size()) +
                                                      " to " + type.to_sql());
      }
      return Value::array(std::move(xs));
    }
  }
  cast_error(v, type);
}

Value evaluate(const BoundExpr& e, const std::vector<Value>& row) {
  switch (e.kind) {
    case BoundExpr::Kind::Constant:
      return e.constant;
    case BoundExpr::Kind::Column:
      return row.at(e.column);
    case BoundExpr::Kind::IsNull:
      return Value::boolean(evaluate(e.args[0], row).is_null() != e.negated);
    case BoundExpr::Kind::Cast:
      return cast_value(evaluate(e.args[0], row), e.cast_type);
    case BoundExpr::Kind::Unary: {
      Value v = evaluate(e.args[0], row);
      if (e.op == "NOT") {
        auto b = truth(v, "NOT");
        return b ? Value::boolean(!*b) : Value::null();
      }
      if (v.is_null()) return v;
      if (e.op == "+") {
        if (!v.is_numeric()) type_error("unary + needs a number, got " + type_of(v));
        return v;
      }
      if (v.type() == ValueType::Int) {
        if (v.as_int() == INT64_MIN) throw Error(ErrorCode::DomainError, "integer overflow in negation");
        return Value::integer(-v.as_int());
      }
      if (v.type() == ValueType::Double) return Value::real(-v.as_double());
      type_error("unary - needs a number, got " + type_of(v));
    }
    case BoundExpr::Kind::Binary: {
      if (e.op == "AND") {
        auto a = truth(evaluate(e.args[0], row), "AND");
        if (a && !*a) return Value::boolean(false);
        auto b = truth(evaluate(e.args[1], row), "AND");
        if (b && !*b) return Value::boolean(false);
        if (!a || !b) return Value::null();
        return Value::boolean(true);
      }
      if (e.op == "OR") {
        auto a = truth(evaluate(e.args[0], row), "OR");
        if (a && *a) return Value::boolean(true);
        auto b = truth(evaluate(e.args[1], row), "OR");
        if (b && *b) return Value::boolean(true);
        if (!a || !b) return Value::null();
        return Value::boolean(false);
      }
      Value a = evaluate(e.args[0], row);
      Value b = evaluate(e.args[1], row);
      if (e.op == "||") {
        if (a.is_null() || b.is_null()) return Value::null();
        return Value::text(text_of(a) + text_of(b));
      }
      if (e.op == "+" || e.op == "-" || e.op == "*" || e.op == "/" || e.op == "%") return arithmetic(e.op, a, b);
      return comparison(e.op, a, b);
    }
    case BoundExpr::Kind::Call: {
      std::vector<Value> args;
      args.reserve(e.args.size());
      for (const auto& a : e.args) args.push_back(evaluate(a, row));
      return call_builtin(e.op, args);
    }
  }
  return Value::null();
}

// ---- plan execution ------------------------------------------------------------

namespace {

using Row = std::vector<Value>;
using RowSet = std::vector<Row>;

Value aggregate_values(const AggregateSpec& spec, const RowSet& rows, const std::vector<std::size_t>& members) {
  const std::string& fn = spec.function;
  if (!spec.arg) return Value::integer(static_cast<std::int64_t>(members.size()));
  if (fn == "first") return members.empty() ? Value::null() : evaluate(*spec.arg, rows[members.front()]);
  std::int64_t count = 0;
  std::int64_t int_sum = 0;
  double dbl_sum = 0.0;
  bool all_int = true;
  bool int_overflow = false;
  std::optional<Value> best;
  for (std::size_t m : members) {
    Value v = evaluate(*spec.arg, rows[m]);
    if (v.is_null()) continue;
    ++count;
    if (fn == "sum" || fn == "avg") {
      if (!v.is_numeric()) type_error(fn + " expects numbers, got " + type_of(v));
      if (v.type() == ValueType::Int) {
        if (__builtin_add_overflow(int_sum, v.as_int(), &int_sum)) int_overflow = true;
      } else {
        all_int = false;
      }
      dbl_sum += v.as_double();
    } else if (fn == "min" || fn == "max") {
      if (!best) {
        best = v;
      } else {
        int c = *compare_values(v, *best);
        if ((fn == "min" && c < 0) || (fn == "max" && c > 0)) best = v;
      }
    }
  }
  if (fn == "count") return Value::integer(count);
  if (count == 0) return Value::null();
  if (fn == "sum") {
    if (all_int && !int_overflow) return Value::integer(int_sum);
    return Value::real(dbl_sum);
  }
  if (fn == "avg") return Value::real(dbl_sum / static_cast<double>(count));
  return *best;
}

std::string row_key(const std::vector<BoundExpr>& keys, const Row& row, bool* has_null = nullptr) {
  std::string key;
  for (const auto& k : keys) {
    Value v = evaluate(k, row);
    if (has_null && v.is_null()) *has_null = true;
    std::string part = group_key(v);
    key += std::to_string(part.size()) + ":" + part;
  }
  return key;
}

Tuple build_tuple(const LlmNodeInfo& llm, const Row& row) {
  Tuple t;
  t.reserve(llm.tuple.size());
  for (const auto& [label, expr] : llm.tuple) t.emplace_back(label, evaluate(expr, row));
  return t;
}

/// What the first request would look like; shown when every answer came from the cache.
std::string render_first_batch(const LlmCall& call, const std::vector<Tuple>& rows) {
  if (call.kind == FunctionKind::Embedding || rows.empty()) return {};
  InferenceJob job = call.job(rows);
  auto d = dedup(job.rows);
  if (d.distinct.empty()) return {};
  std::vector<Tuple> batch;
  if (job.contract.per_tuple()) {
    auto plan = plan_batches(job, d.distinct);
    for (std::size_t i : plan.batches.front()) batch.push_back(d.distinct[i]);
  } else {
    batch = rows;
  }
  return build_meta_prompt(job.kind, job.prompt_text, batch, job.format, job.contract,
                           job.prompt_template ? &*job.prompt_template : nullptr)
      .full();
}

class Executor {
 public:
  Executor(const ExecEnvironment& env, const ExecOverrides& overrides, std::map<int, NodeStats>& stats)
      : env_(env), overrides_(overrides), stats_(stats) {}

  RowSet run(const PlanNode& n) {
    std::vector<RowSet> inputs;
    inputs.reserve(n.children.size());
    for (const auto& c : n.children) inputs.push_back(run(*c));

    NodeStats st;
    st.node_id = n.id;
    auto started = std::chrono::steady_clock::now();
    RowSet out;
    try {
      out = compute(n, inputs, st);
    } catch (const ExecError&) {
      throw;
    } catch (const ProviderError& e) {
      throw ExecError(n.id, e.what(), true, ErrorCode::ProviderError);
    } catch (const Error& e) {
      throw ExecError(n.id, e.what(), false, e.code());
    } catch (const std::exception& e) {
      throw ExecError(n.id, e.what());
    }
    st.wall_time = std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::steady_clock::now() - started);
    st.rows_out = out.size();
    stats_[n.id] = std::move(st);
    return out;
  }

 private:
  RowSet compute(const PlanNode& n, std::vector<RowSet>& in, NodeStats& st) {
    switch (n.kind) {
      case PlanKind::Scan: return scan(n);
      case PlanKind::TableFunction: return table_function(n);
      case PlanKind::Values: return RowSet(1);
      case PlanKind::Filter: {
        RowSet out;
        for (auto& row : in[0]) {
          Value v = evaluate(*n.predicate, row);
          if (truth(v, "WHERE").value_or(false)) out.push_back(std::move(row));
        }
        return out;
      }
      case PlanKind::Project: {
        RowSet out;
        out.reserve(in[0].size());
        for (const auto& row : in[0]) {
          Row r;
          r.reserve(n.exprs.size());
          for (const auto& e : n.exprs) r.push_back(evaluate(e, row));
          out.push_back(std::move(r));
        }
        return out;
      }
      case PlanKind::Join: return join(n, in[0], in[1]);
      case PlanKind::Aggregate: return aggregate(n, in[0]);
      case PlanKind::Window: {
        std::vector<std::size_t> all(in[0].size());
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
        std::vector<Value> values;
        for (const auto& spec : n.aggregates) values.push_back(aggregate_values(spec, in[0], all));
        for (auto& row : in[0]) row.insert(row.end(), values.begin(), values.end());
        return std::move(in[0]);
      }
      case PlanKind::Sort: {
        RowSet& rows = in[0];
        std::vector<std::vector<Value>> keys(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
          for (const auto& k : n.sort_keys) keys[i].push_back(evaluate(k.expr, rows[i]));
        }
        std::vector<std::size_t> order(rows.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
          for (std::size_t k = 0; k < n.sort_keys.size(); ++k) {
            int c = sort_compare(keys[a][k], keys[b][k]);
            if (n.sort_keys[k].descending) c = -c;
            if (c != 0) return c < 0;
          }
          return false;
        });
        RowSet out;
        out.reserve(rows.size());
        for (std::size_t i : order) out.push_back(std::move(rows[i]));
        return out;
      }
      case PlanKind::Limit: {
        RowSet& rows = in[0];
        if (static_cast<std::int64_t>(rows.size()) > n.limit) rows.resize(static_cast<std::size_t>(std::max<std::int64_t>(n.limit, 0)));
        return std::move(rows);
      }
      case PlanKind::CteRef:
      case PlanKind::Ask:
        return std::move(in[0]);
      case PlanKind::LlmScalar: return llm_scalar(n, in[0], st);
      case PlanKind::LlmAggregate: return llm_aggregate(n, in[0], st);
      case PlanKind::FtsMatch: return fts_match(n, in[0]);
    }
    return {};
  }

  RowSet scan(const PlanNode& n) {
    const Table* t = env_.table ? env_.table(n.name) : nullptr;
    if (!t) throw Error(ErrorCode::BindingError, "table '" + n.name + "' no longer exists");
    RowSet out(t->row_count());
    for (std::size_t r = 0; r < t->row_count(); ++r) out[r] = t->row(r);
    return out;
  }

  RowSet table_function(const PlanNode& n) {
    if (!env_.catalog) throw Error(ErrorCode::BindingError, n.name + "() needs a catalog");
    RowSet out;
    if (n.name == "flock_models") {
      for (const auto& r : env_.catalog->list(ResourceKind::Model)) {
        const auto& m = std::get<ModelResource>(r);
        out.push_back({Value::text(m.name), Value::text(m.model_id), Value::text(m.provider_id),
                       Value::integer(m.context_window_tokens), Value::integer(m.max_output_tokens),
                       Value::json(m.params.to_json()), Value::integer(m.version),
                       Value::text(std::string(scope_name(m.scope))), Value::text(format_timestamp(m.created_at))});
      }
    } else {
      for (const auto& r : env_.catalog->list(ResourceKind::Prompt)) {
        const auto& p = std::get<PromptResource>(r);
        out.push_back({Value::text(p.name), Value::text(p.text), Value::integer(p.version),
                       Value::text(std::string(scope_name(p.scope))), Value::text(format_timestamp(p.created_at))});
      }
    }
    return out;
  }

  RowSet join(const PlanNode& n, RowSet& left, RowSet& right) {
    const std::size_t lw = n.children[0]->schema.size();
    const std::size_t rw = n.children[1]->schema.size();
    auto combine = [](const Row& l, const Row& r) {
      Row out = l;
      out.insert(out.end(), r.begin(), r.end());
      return out;
    };
    auto passes = [&](const Row& row) {
      return !n.predicate || truth(evaluate(*n.predicate, row), "ON").value_or(false);
    };
    RowSet out;
    if (n.join_keys.empty()) {
      for (const auto& l : left) {
        for (const auto& r : right) {
          Row row = combine(l, r);
          if (passes(row)) out.push_back(std::move(row));
        }
      }
      return out;
    }
    std::vector<BoundExpr> lkeys, rkeys;
    for (const auto& [l, r] : n.join_keys) {
      lkeys.push_back(l);
      rkeys.push_back(r);
    }
    std::unordered_map<std::string, std::vector<std::size_t>> index;
    for (std::size_t i = 0; i < right.size(); ++i) {
      bool has_null = false;
      std::string k = row_key(rkeys, right[i], &has_null);
      if (!has_null) index[k].push_back(i);
    }
    std::vector<bool> right_matched(right.size(), false);
    const bool outer = n.join_type == sql::JoinType::FullOuter;
    for (const auto& l : left) {
      bool has_null = false;
      std::string k = row_key(lkeys, l, &has_null);
      bool matched = false;
      if (!has_null) {
        auto it = index.find(k);
        if (it != index.end()) {
          for (std::size_t ri : it->second) {
            Row row = combine(l, right[ri]);
            if (!passes(row)) continue;
            matched = true;
            right_matched[ri] = true;
            out.push_back(std::move(row));
          }
        }
      }
      if (!matched && outer) out.push_back(combine(l, Row(rw)));
    }
    if (outer) {
      for (std::size_t i = 0; i < right.size(); ++i) {
        if (!right_matched[i]) out.push_back(combine(Row(lw), right[i]));
      }
    }
    return out;
  }

  RowSet aggregate(const PlanNode& n, const RowSet& rows) {
    std::vector<std::string> order;
    std::unordered_map<std::string, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      std::string k = row_key(n.exprs, rows[i]);
      auto [it, inserted] = groups.try_emplace(k);
      if (inserted) order.push_back(k);
      it->second.push_back(i);
    }
    if (n.exprs.empty() && order.empty()) {
      order.emplace_back();
      groups[""];
    }
    RowSet out;
    for (const auto& k : order) {
      const auto& members = groups[k];
      Row r;
      for (const auto& e : n.exprs) r.push_back(evaluate(e, rows[members.front()]));
      for (const auto& spec : n.aggregates) r.push_back(aggregate_values(spec, rows, members));
      out.push_back(std::move(r));
    }
    return out;
  }

  void annotate(NodeStats& st, const LlmCall& call, InferenceStats stats, const std::vector<Tuple>& sample_rows) {
    st.batch_mode = call.batch_mode.to_string();
    st.format = std::string(format_name(call.format));
    st.meta_prompt = stats.sample_prompt.empty() ? render_first_batch(call, sample_rows) : stats.sample_prompt;
    st.inference = std::move(stats);
  }

  const InferenceRuntime& runtime() const {
    if (!env_.runtime) throw Error(ErrorCode::ExecError, "no inference runtime configured");
    return *env_.runtime;
  }

  RowSet llm_scalar(const PlanNode& n, RowSet& rows, NodeStats& st) {
    LlmCall call = overrides_.apply(n.id, n.llm->call);
    std::vector<Tuple> tuples;
    tuples.reserve(rows.size());
    for (const auto& row : rows) tuples.push_back(build_tuple(*n.llm, row));
    InferenceStats stats;
    if (!tuples.empty()) {
      auto result = run_scalar(runtime(), call, tuples);
      for (std::size_t i = 0; i < rows.size(); ++i) rows[i].push_back(std::move(result.values[i]));
      stats = std::move(result.stats);
    }
    annotate(st, call, std::move(stats), tuples);
    return std::move(rows);
  }

  RowSet llm_aggregate(const PlanNode& n, RowSet& rows, NodeStats& st) {
    LlmCall call = overrides_.apply(n.id, n.llm->call);
    std::vector<std::string> order;
    std::unordered_map<std::string, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      std::string k = row_key(n.exprs, rows[i]);
      auto [it, inserted] = groups.try_emplace(k);
      if (inserted) order.push_back(k);
      it->second.push_back(i);
    }
    InferenceStats stats;
    std::vector<Tuple> first_group;
    std::vector<Value> per_row(rows.size());
    for (const auto& k : order) {
      const auto& members = groups[k];
      std::vector<Tuple> group;
      group.reserve(members.size());
      for (std::size_t m : members) group.push_back(build_tuple(*n.llm, rows[m]));
      auto result = run_aggregate(runtime(), call, group);
      for (std::size_t m : members) per_row[m] = result.value;
      stats.merge(result.stats);
      if (first_group.empty()) first_group = std::move(group);
    }
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i].push_back(std::move(per_row[i]));
    annotate(st, call, std::move(stats), first_group);
    return std::move(rows);
  }

  RowSet fts_match(const PlanNode& n, RowSet& rows) {
    const InvertedIndex* index = env_.fts_index ? env_.fts_index(n.fts->table) : nullptr;
    if (!index) throw Error(ErrorCode::BindingError, "table '" + n.fts->table + "' has no full-text index");
    auto scores = index->match(n.fts->query);
    for (auto& row : rows) {
      Value id = evaluate(n.fts->id, row);
      Value score;
      if (!id.is_null()) {
        auto it = scores.find(group_key(id));
        if (it != scores.end()) score = Value::real(it->second);
      }
      row.push_back(std::move(score));
    }
    return std::move(rows);
  }

  const ExecEnvironment& env_;
  const ExecOverrides& overrides_;
  std::map<int, NodeStats>& stats_;
};

}  // namespace

QueryResult execute_plan(const LogicalPlan& plan, const ExecEnvironment& env, const ExecOverrides& overrides) {
  for (const auto& [id, o] : overrides.per_node) {
    const PlanNode* node = plan.find(id);
    if (!node) throw Error(ErrorCode::InvalidOverride, "plan has no node " + std::to_string(id));
    if (node->kind != PlanKind::LlmScalar && node->kind != PlanKind::LlmAggregate) {
      throw Error(ErrorCode::InvalidOverride, "node " + std::to_string(id) + " is not an LLM node");
    }
  }
  QueryResult result;
  result.plan = plan;
  result.column_names = plan.output_names();
  auto started = std::chrono::steady_clock::now();
  Executor exec(env, overrides, result.stats);
  RowSet rows = exec.run(*plan.root);
  result.wall_time = std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::steady_clock::now() - started);
  result.rows = std::move(rows);
  return result;
}

}  // namespace flockmtl
