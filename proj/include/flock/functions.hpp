#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "flock/catalog.hpp"
#include "flock/runtime.hpp"

namespace flockmtl {

enum class FusionMethod { Rrf, CombSum, CombMnz, CombMed, CombAnz };

inline constexpr double kRrfK = 60.0;

std::string_view fusion_method_name(FusionMethod method);  // "rrf", "combsum", ...
std::optional<FusionMethod> parse_fusion_method(std::string_view name);

/// NULL inputs are "missing from this retriever". All NULL gives NULL.
/// Throws Error(DomainError) for an RRF rank below 1.
std::optional<double> fusion(FusionMethod method, std::span<const std::optional<double>> inputs);

enum class FunctionCategory { LlmScalar, LlmAggregate, Scalar, Aggregate, Retrieval, TableFunction };

struct FunctionInfo {
  std::string name;
  FunctionCategory category;
  std::optional<FunctionKind> llm_kind;
  std::string signature;
  std::string description;
};

/// Every function the SQL frontend accepts.
const std::vector<FunctionInfo>& function_registry();
/// Case-insensitive lookup by SQL name.
const FunctionInfo* find_function(std::string_view name);

/// `{'model_name': ..., 'version': ...}` or `{'model': ...}` with optional generation params.
struct ModelSpec {
  std::optional<std::string> model_name;
  std::optional<std::string> model_id;
  std::optional<int> version;
  GenerationParams params;

  /// Throws Error(BindingError) when the map does not hold exactly one form.
  static ModelSpec from_json(const Json& map);
  ModelResource resolve(const Catalog& catalog) const;
};

/// `{'prompt_name': ..., 'version': ...}` or `{'prompt': ...}`.
struct PromptSpec {
  std::optional<std::string> prompt_name;
  std::optional<std::string> text;
  std::optional<int> version;

  static PromptSpec from_json(const Json& map);
  std::string resolve(const Catalog& catalog) const;
};

/// Resolved arguments of one semantic function call plus the inspector overrides.
struct LlmCall {
  FunctionKind kind = FunctionKind::Complete;
  ModelResource model;
  std::string prompt_text;
  SerializationFormat format = SerializationFormat::Xml;
  BatchMode batch_mode;
  std::optional<PromptTemplate> prompt_template;
  bool use_cache = true;

  InferenceJob job(std::vector<Tuple> rows) const;
};

struct ScalarResult {
  std::vector<Value> values;
  InferenceStats stats;
};

/// llm_complete, llm_complete_json, llm_filter, llm_embedding over rows; aligned with the input.
ScalarResult run_scalar(const InferenceRuntime& runtime, const LlmCall& call, std::vector<Tuple> rows);

struct AggregateResult {
  Value value;
  InferenceStats stats;
};

/// llm_reduce(_json), llm_rerank, llm_first, llm_last over one group.
AggregateResult run_aggregate(const InferenceRuntime& runtime, const LlmCall& call,
                              const std::vector<Tuple>& group);

/// Interprets an answer under llm_filter rules: JSON booleans, or "true"/"false" in any case.
std::optional<bool> parse_filter_answer(const Json& answer);

/// Embedding input: values sorted by key, newline-joined; NULL values skipped.
std::optional<std::string> embedding_text(const Tuple& row);

/// Tuple as a JSON object (used for rerank output).
Json tuple_to_json(const Tuple& row);

inline constexpr std::size_t kRerankWindow = 10;
inline constexpr std::size_t kRerankStride = 5;

/// Sliding windows visited by listwise reranking of n items: tail to head.
std::vector<std::pair<std::size_t, std::size_t>> rerank_windows(std::size_t n);

}  // namespace flockmtl
