#include "flock/functions.hpp"

#include <algorithm>
#include <cctype>
#include <numeric>

#include "flock/error.hpp"

namespace flockmtl {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace

std::string_view fusion_method_name(FusionMethod method) {
  switch (method) {
    case FusionMethod::Rrf: return "rrf";
    case FusionMethod::CombSum: return "combsum";
    case FusionMethod::CombMnz: return "combmnz";
    case FusionMethod::CombMed: return "combmed";
    case FusionMethod::CombAnz: return "combanz";
  }
  return "";
}

std::optional<FusionMethod> parse_fusion_method(std::string_view name) {
  auto n = lower(name);
  for (auto m : {FusionMethod::Rrf, FusionMethod::CombSum, FusionMethod::CombMnz, FusionMethod::CombMed,
                 FusionMethod::CombAnz}) {
    if (n == fusion_method_name(m)) return m;
  }
  return std::nullopt;
}

std::optional<double> fusion(FusionMethod method, std::span<const std::optional<double>> inputs) {
  std::vector<double> present;
  for (const auto& x : inputs) {
    if (x) present.push_back(*x);
  }
  if (present.empty()) return std::nullopt;

  double sum = 0.0;
  for (double x : present) sum += x;

  switch (method) {
    case FusionMethod::Rrf: {
      double score = 0.0;
      for (double r : present) {
        if (r < 1.0) throw Error(ErrorCode::DomainError, "rrf rank must be >= 1, got " + std::to_string(r));
        score += 1.0 / (kRrfK + r);
      }
      return score;
    }
    case FusionMethod::CombSum:
      return sum;
    case FusionMethod::CombMnz: {
      auto positive = std::count_if(present.begin(), present.end(), [](double x) { return x > 0.0; });
      return sum * static_cast<double>(positive);
    }
    case FusionMethod::CombMed: {
      std::sort(present.begin(), present.end());
      std::size_t n = present.size();
      if (n % 2 == 1) return present[n / 2];
      return (present[n / 2 - 1] + present[n / 2]) / 2.0;
    }
    case FusionMethod::CombAnz:
      return sum / static_cast<double>(present.size());
  }
  return std::nullopt;
}

const std::vector<FunctionInfo>& function_registry() {
  using C = FunctionCategory;
  using K = FunctionKind;
  static const std::vector<FunctionInfo> registry = {
      {"llm_complete", C::LlmScalar, K::Complete, "llm_complete(model, prompt, {tuple}) -> TEXT",
       "Generates text for each input tuple."},
      {"llm_complete_json", C::LlmScalar, K::CompleteJson, "llm_complete_json(model, prompt, {tuple}) -> JSON",
       "Generates a JSON value for each input tuple."},
      {"llm_filter", C::LlmScalar, K::Filter, "llm_filter(model, prompt, {tuple}) -> BOOL",
       "Returns true or false for each input tuple."},
      {"llm_embedding", C::LlmScalar, K::Embedding, "llm_embedding(model, {tuple}) -> DOUBLE[]",
       "Embedding vector of the tuple's text values."},
      {"llm_reduce", C::LlmAggregate, K::Reduce, "llm_reduce(model, prompt, {tuple}) -> TEXT",
       "Reduces a group of tuples to one text value."},
      {"llm_reduce_json", C::LlmAggregate, K::ReduceJson, "llm_reduce_json(model, prompt, {tuple}) -> JSON",
       "Reduces a group of tuples to one JSON value."},
      {"llm_rerank", C::LlmAggregate, K::Rerank, "llm_rerank(model, prompt, {tuple}) -> JSON",
       "Group tuples ordered by relevance, as a JSON array."},
      {"llm_first", C::LlmAggregate, K::First, "llm_first(model, prompt, {tuple}) -> JSON",
       "Most relevant tuple of the group."},
      {"llm_last", C::LlmAggregate, K::Last, "llm_last(model, prompt, {tuple}) -> JSON",
       "Least relevant tuple of the group."},
      {"fusion", C::Scalar, std::nullopt, "fusion(score, ...) -> DOUBLE",
       "COMBSUM of normalized scores; NULL counts as 0."},
      {"fusion_rrf", C::Scalar, std::nullopt, "fusion_rrf(rank, ...) -> DOUBLE",
       "Reciprocal rank fusion over 1-based ranks, k = 60."},
      {"fusion_combsum", C::Scalar, std::nullopt, "fusion_combsum(score, ...) -> DOUBLE", "Sum of scores."},
      {"fusion_combmnz", C::Scalar, std::nullopt, "fusion_combmnz(score, ...) -> DOUBLE",
       "Sum of scores times the number of positive scores."},
      {"fusion_combmed", C::Scalar, std::nullopt, "fusion_combmed(score, ...) -> DOUBLE",
       "Median of non-NULL scores."},
      {"fusion_combanz", C::Scalar, std::nullopt, "fusion_combanz(score, ...) -> DOUBLE",
       "Sum of scores divided by the number of non-NULL scores."},
      {"array_cosine_similarity", C::Scalar, std::nullopt, "array_cosine_similarity(a, b) -> DOUBLE",
       "Cosine similarity of two equal-length arrays."},
      {"lower", C::Scalar, std::nullopt, "lower(text) -> TEXT", "Lowercase."},
      {"upper", C::Scalar, std::nullopt, "upper(text) -> TEXT", "Uppercase."},
      {"length", C::Scalar, std::nullopt, "length(text) -> INT", "Length in code points."},
      {"coalesce", C::Scalar, std::nullopt, "coalesce(x, ...) -> any", "First non-NULL argument."},
      {"abs", C::Scalar, std::nullopt, "abs(x) -> number", "Absolute value."},
      {"round", C::Scalar, std::nullopt, "round(x[, digits]) -> DOUBLE", "Rounds half away from zero."},
      {"concat", C::Scalar, std::nullopt, "concat(x, ...) -> TEXT", "Concatenation; NULLs skipped."},
      {"json_extract", C::Scalar, std::nullopt, "json_extract(json, 'key') -> JSON",
       "Member of a JSON object or element of an array."},
      {"count", C::Aggregate, std::nullopt, "count(*) / count(x) -> INT", "Row count or non-NULL count."},
      {"sum", C::Aggregate, std::nullopt, "sum(x) -> number", "Sum of non-NULL values."},
      {"avg", C::Aggregate, std::nullopt, "avg(x) -> DOUBLE", "Mean of non-NULL values."},
      {"min", C::Aggregate, std::nullopt, "min(x) -> any", "Smallest non-NULL value."},
      {"max", C::Aggregate, std::nullopt, "max(x) -> any", "Largest non-NULL value; also max(x) OVER ()."},
      {"match_bm25", C::Retrieval, std::nullopt, "match_bm25(id_column, 'query'[, fields := 'col']) -> DOUBLE",
       "BM25 score of the row's document; NULL when no query term occurs."},
      {"flock_models", C::TableFunction, std::nullopt, "flock_models()", "All MODEL resource versions."},
      {"flock_prompts", C::TableFunction, std::nullopt, "flock_prompts()", "All PROMPT resource versions."},
  };
  return registry;
}

const FunctionInfo* find_function(std::string_view name) {
  auto n = lower(name);
  for (const auto& f : function_registry()) {
    if (f.name == n) return &f;
  }
  return nullptr;
}

namespace {

std::optional<int> version_field(const Json& map) {
  if (!map.contains("version")) return std::nullopt;
  const auto& v = map["version"];
  int version = 0;
  if (v.is_number_integer()) {
    version = v.get<int>();
  } else if (v.is_string()) {
    try {
      version = std::stoi(v.get<std::string>());
    } catch (const std::exception&) {
      throw Error(ErrorCode::BindingError, "version must be an integer");
    }
  } else {
    throw Error(ErrorCode::BindingError, "version must be an integer");
  }
  if (version < 1) throw Error(ErrorCode::BindingError, "version must be >= 1");
  return version;
}

std::optional<double> number_field(const Json& map, const char* key) {
  if (!map.contains(key)) return std::nullopt;
  const auto& v = map[key];
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    try {
      return std::stod(v.get<std::string>());
    } catch (const std::exception&) {
    }
  }
  throw Error(ErrorCode::BindingError, std::string(key) + " must be a number");
}

std::string string_field(const Json& map, const char* key) {
  const auto& v = map[key];
  if (!v.is_string()) throw Error(ErrorCode::BindingError, std::string("'") + key + "' must be a string");
  return v.get<std::string>();
}

}  // namespace

ModelSpec ModelSpec::from_json(const Json& map) {
  if (!map.is_object()) throw Error(ErrorCode::BindingError, "model argument must be a map");
  ModelSpec spec;
  bool named = map.contains("model_name");
  bool inline_id = map.contains("model");
  if (named == inline_id) {
    throw Error(ErrorCode::BindingError, "model map needs exactly one of 'model_name' or 'model'");
  }
  for (const auto& [key, _] : map.items()) {
    if (key != "model_name" && key != "model" && key != "version" && key != "temperature" && key != "top_p") {
      throw Error(ErrorCode::BindingError, "unknown key '" + key + "' in model map");
    }
  }
  if (named) spec.model_name = string_field(map, "model_name");
  if (inline_id) {
    spec.model_id = string_field(map, "model");
    if (map.contains("version")) throw Error(ErrorCode::BindingError, "'version' applies to 'model_name' only");
  }
  spec.version = version_field(map);
  spec.params.temperature = number_field(map, "temperature");
  spec.params.top_p = number_field(map, "top_p");
  return spec;
}

ModelResource ModelSpec::resolve(const Catalog& catalog) const {
  try {
    if (model_name) {
      auto m = catalog.resolve_model(*model_name, version);
      if (params.temperature) m.params.temperature = params.temperature;
      if (params.top_p) m.params.top_p = params.top_p;
      return m;
    }
    return catalog.inline_model(*model_id, params);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::NotFound || e.code() == ErrorCode::VersionNotFound ||
        e.code() == ErrorCode::UnknownModel) {
      throw Error(ErrorCode::UnknownResource, e.what());
    }
    throw;
  }
}

PromptSpec PromptSpec::from_json(const Json& map) {
  if (!map.is_object()) throw Error(ErrorCode::BindingError, "prompt argument must be a map");
  PromptSpec spec;
  bool named = map.contains("prompt_name");
  bool inline_text = map.contains("prompt");
  if (named == inline_text) {
    throw Error(ErrorCode::BindingError, "prompt map needs exactly one of 'prompt_name' or 'prompt'");
  }
  for (const auto& [key, _] : map.items()) {
    if (key != "prompt_name" && key != "prompt" && key != "version") {
      throw Error(ErrorCode::BindingError, "unknown key '" + key + "' in prompt map");
    }
  }
  if (named) spec.prompt_name = string_field(map, "prompt_name");
  if (inline_text) {
    spec.text = string_field(map, "prompt");
    if (map.contains("version")) throw Error(ErrorCode::BindingError, "'version' applies to 'prompt_name' only");
    if (spec.text->empty()) throw Error(ErrorCode::BindingError, "prompt text is empty");
  }
  spec.version = version_field(map);
  return spec;
}

std::string PromptSpec::resolve(const Catalog& catalog) const {
  if (text) return *text;
  try {
    return catalog.resolve_prompt(*prompt_name, version).text;
  } catch (const Error& e) {
    if (e.code() == ErrorCode::NotFound || e.code() == ErrorCode::VersionNotFound) {
      throw Error(ErrorCode::UnknownResource, e.what());
    }
    throw;
  }
}

InferenceJob LlmCall::job(std::vector<Tuple> rows) const {
  InferenceJob j;
  j.kind = kind;
  j.model = model;
  j.prompt_text = prompt_text;
  j.rows = std::move(rows);
  j.format = format;
  j.contract = default_contract(kind);
  j.batch_mode = batch_mode;
  j.prompt_template = prompt_template;
  j.use_cache = use_cache;
  return j;
}

std::optional<bool> parse_filter_answer(const Json& answer) {
  if (answer.is_boolean()) return answer.get<bool>();
  if (answer.is_string()) {
    auto s = lower(answer.get<std::string>());
    auto first = s.find_first_not_of(" \t\r\n\"'.");
    auto last = s.find_last_not_of(" \t\r\n\"'.");
    if (first == std::string::npos) return std::nullopt;
    s = s.substr(first, last - first + 1);
    if (s == "true") return true;
    if (s == "false") return false;
  }
  return std::nullopt;
}

std::optional<std::string> embedding_text(const Tuple& row) {
  std::vector<const std::pair<std::string, Value>*> sorted;
  for (const auto& kv : row) {
    if (!kv.second.is_null()) sorted.push_back(&kv);
  }
  if (sorted.empty()) return std::nullopt;
  std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->first < b->first; });
  std::string text;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (i > 0) text += "\n";
    const auto& v = sorted[i]->second;
    text += v.type() == ValueType::Text ? v.as_text() : v.to_string();
  }
  return text;
}

Json tuple_to_json(const Tuple& row) {
  Json obj = Json::object();
  for (const auto& [k, v] : row) obj[k] = v.to_json();
  return obj;
}

std::vector<std::pair<std::size_t, std::size_t>> rerank_windows(std::size_t n) {
  std::vector<std::pair<std::size_t, std::size_t>> windows;
  if (n == 0) return windows;
  if (n <= kRerankWindow) {
    windows.emplace_back(0, n);
    return windows;
  }
  std::size_t start = n - kRerankWindow;
  while (true) {
    windows.emplace_back(start, start + kRerankWindow);
    if (start == 0) break;
    start = start >= kRerankStride ? start - kRerankStride : 0;
  }
  return windows;
}

namespace {

Value text_answer(const Json& answer) {
  if (answer.is_null()) return Value::null();
  if (answer.is_string()) return Value::text(answer.get<std::string>());
  return Value::text(answer.dump());
}

Value json_answer(const Json& answer) {
  if (answer.is_null()) return Value::null();
  if (answer.is_string()) {
    auto parsed = Json::parse(answer.get<std::string>(), nullptr, false);
    if (!parsed.is_discarded()) return Value::json(std::move(parsed));
  }
  return Value::json(answer);
}

Value convert_answer(FunctionKind kind, const Json& answer) {
  switch (kind) {
    case FunctionKind::Complete:
    case FunctionKind::Reduce:
      return text_answer(answer);
    case FunctionKind::CompleteJson:
    case FunctionKind::ReduceJson:
      return json_answer(answer);
    case FunctionKind::Filter: {
      auto b = parse_filter_answer(answer);
      return b ? Value::boolean(*b) : Value::null();
    }
    default:
      return Value::null();
  }
}

ScalarResult run_embedding(const InferenceRuntime& runtime, const LlmCall& call, const std::vector<Tuple>& rows) {
  ScalarResult out;
  out.values.assign(rows.size(), Value::null());
  std::vector<std::string> texts;
  std::vector<std::size_t> positions;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (auto t = embedding_text(rows[i])) {
      texts.push_back(std::move(*t));
      positions.push_back(i);
    }
  }
  auto outcome = runtime.embed(call.model, texts, call.batch_mode, call.use_cache);
  for (std::size_t k = 0; k < positions.size(); ++k) {
    if (outcome.vectors[k]) out.values[positions[k]] = Value::array(std::move(*outcome.vectors[k]));
  }
  out.stats = std::move(outcome.stats);
  out.stats.input_rows = rows.size();
  out.stats.null_outputs = static_cast<std::size_t>(
      std::count_if(out.values.begin(), out.values.end(), [](const Value& v) { return v.is_null(); }));
  return out;
}

void accumulate(InferenceStats& into, const InferenceStats& from) {
  into.merge(from);
  if (into.sample_prompt.empty()) into.sample_prompt = from.sample_prompt;
}

constexpr int kMaxReduceDepth = 8;

std::vector<std::vector<Tuple>> chunk_group(const LlmCall& call, const std::vector<Tuple>& rows) {
  std::vector<std::vector<Tuple>> chunks;
  auto plan = plan_batches(call.job({}), rows);
  for (const auto& batch : plan.batches) {
    std::vector<Tuple> chunk;
    for (auto i : batch) chunk.push_back(rows[i]);
    chunks.push_back(std::move(chunk));
  }
  return chunks;
}

std::optional<Json> reduce_group(const InferenceRuntime& runtime, const LlmCall& call, const std::vector<Tuple>& rows,
                                 InferenceStats& stats, int depth) {
  if (rows.empty()) return std::nullopt;
  if (depth > kMaxReduceDepth) {
    ++stats.warnings;
    return std::nullopt;
  }
  auto chunks = chunk_group(call, rows);
  std::vector<Json> partials;
  if (chunks.size() <= 1) {
    auto outcome = runtime.complete_single(call.job(rows));
    accumulate(stats, outcome.stats);
    if (outcome.status == SingleOutcome::Status::Ok) return outcome.value;
    if (outcome.status == SingleOutcome::Status::Invalid || rows.size() == 1) {
      ++stats.warnings;
      return std::nullopt;
    }
    // The provider rejected a group the planner thought would fit: halve it.
    std::size_t half = rows.size() / 2;
    chunks = {std::vector<Tuple>(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(half)),
              std::vector<Tuple>(rows.begin() + static_cast<std::ptrdiff_t>(half), rows.end())};
  }
  for (const auto& chunk : chunks) {
    if (auto partial = reduce_group(runtime, call, chunk, stats, depth + 1)) partials.push_back(std::move(*partial));
  }
  if (partials.empty()) return std::nullopt;
  if (partials.size() == 1) return partials.front();
  std::vector<Tuple> partial_rows;
  for (const auto& p : partials) {
    Value v = call.kind == FunctionKind::ReduceJson ? Value::json(p) : text_answer(p);
    partial_rows.push_back(Tuple{{"partial_result", std::move(v)}});
  }
  return reduce_group(runtime, call, partial_rows, stats, depth + 1);
}

bool is_permutation_of(const Json& ranking, std::size_t n) {
  if (!ranking.is_array() || ranking.size() != n) return false;
  std::vector<bool> seen(n, false);
  for (const auto& id : ranking) {
    if (!id.is_number_unsigned() && !id.is_number_integer()) return false;
    auto i = id.get<std::int64_t>();
    if (i < 0 || static_cast<std::size_t>(i) >= n || seen[static_cast<std::size_t>(i)]) return false;
    seen[static_cast<std::size_t>(i)] = true;
  }
  return true;
}

std::vector<std::size_t> rerank_order(const InferenceRuntime& runtime, const LlmCall& call,
                                      const std::vector<Tuple>& rows, InferenceStats& stats) {
  std::vector<std::size_t> order(rows.size());
  std::iota(order.begin(), order.end(), 0);
  LlmCall rank_call = call;
  rank_call.kind = FunctionKind::Rerank;
  for (auto [start, end] : rerank_windows(rows.size())) {
    std::vector<Tuple> window;
    for (std::size_t i = start; i < end; ++i) window.push_back(rows[order[i]]);
    const std::size_t n = window.size();
    auto outcome = runtime.complete_single(rank_call.job(std::move(window)),
                                           [n](const Json& j) { return is_permutation_of(j, n); });
    accumulate(stats, outcome.stats);
    if (outcome.status != SingleOutcome::Status::Ok) {
      ++stats.warnings;  // keep the current order for this window
      continue;
    }
    std::vector<std::size_t> reordered;
    for (const auto& id : outcome.value) reordered.push_back(order[start + id.get<std::size_t>()]);
    std::copy(reordered.begin(), reordered.end(), order.begin() + static_cast<std::ptrdiff_t>(start));
  }
  return order;
}

}  // namespace

ScalarResult run_scalar(const InferenceRuntime& runtime, const LlmCall& call, std::vector<Tuple> rows) {
  if (call.kind == FunctionKind::Embedding) return run_embedding(runtime, call, rows);
  ScalarResult out;
  const std::size_t n = rows.size();
  auto outcome = runtime.get_or_compute(call.job(std::move(rows)));
  out.values.reserve(n);
  for (const auto& answer : outcome.outputs) {
    out.values.push_back(answer ? convert_answer(call.kind, *answer) : Value::null());
  }
  out.stats = std::move(outcome.stats);
  out.stats.null_outputs = static_cast<std::size_t>(
      std::count_if(out.values.begin(), out.values.end(), [](const Value& v) { return v.is_null(); }));
  return out;
}

AggregateResult run_aggregate(const InferenceRuntime& runtime, const LlmCall& call, const std::vector<Tuple>& group) {
  AggregateResult out;
  out.stats.input_rows = group.size();
  out.stats.distinct_rows = group.size();
  auto started = std::chrono::steady_clock::now();
  if (!group.empty()) {
    switch (call.kind) {
      case FunctionKind::Reduce:
      case FunctionKind::ReduceJson: {
        auto answer = reduce_group(runtime, call, group, out.stats, 0);
        out.value = answer ? convert_answer(call.kind, *answer) : Value::null();
        break;
      }
      case FunctionKind::Rerank:
      case FunctionKind::First:
      case FunctionKind::Last: {
        auto order = rerank_order(runtime, call, group, out.stats);
        if (call.kind == FunctionKind::Rerank) {
          Json arr = Json::array();
          for (auto i : order) arr.push_back(tuple_to_json(group[i]));
          out.value = Value::json(std::move(arr));
        } else {
          auto i = call.kind == FunctionKind::First ? order.front() : order.back();
          out.value = Value::json(tuple_to_json(group[i]));
        }
        break;
      }
      default:
        throw Error(ErrorCode::BindingError,
                    std::string(function_name(call.kind)) + " is not an aggregate function");
    }
  }
  if (out.value.is_null()) ++out.stats.null_outputs;
  out.stats.wall_time =
      std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::steady_clock::now() - started);
  return out;
}

}  // namespace flockmtl
