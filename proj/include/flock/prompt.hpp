#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "flock/value.hpp"

namespace flockmtl {

enum class SerializationFormat { Xml, Json, Markdown };

std::string_view format_name(SerializationFormat format);  // "XML" / "JSON" / "MARKDOWN"
/// Case-insensitive; throws Error(InvalidOverride) for unknown names.
SerializationFormat parse_format(std::string_view name);

enum class FunctionKind {
  Complete,
  CompleteJson,
  Filter,
  Embedding,
  Reduce,
  ReduceJson,
  Rerank,
  First,
  Last,
};

std::string_view function_name(FunctionKind kind);  // SQL name, e.g. "llm_filter"

enum class ContractKind { TextPerTuple, JsonPerTuple, BoolPerTuple, SingleText, SingleJson, Ranking };

std::string_view contract_name(ContractKind kind);

struct OutputContract {
  ContractKind kind = ContractKind::TextPerTuple;
  std::optional<std::string> schema_hint;

  bool operator==(const OutputContract&) const = default;
  bool per_tuple() const {
    return kind == ContractKind::TextPerTuple || kind == ContractKind::JsonPerTuple ||
           kind == ContractKind::BoolPerTuple;
  }
};

OutputContract default_contract(FunctionKind kind);

/// One input tuple: ordered (column label, value) pairs.
using Tuple = std::vector<std::pair<std::string, Value>>;

/// Column labels of `rows[0]`; throws Error(HeterogeneousRows) if any row has a different key set.
std::vector<std::string> tuple_schema(std::span<const Tuple> rows);

/// Serialized fragment for a single tuple with the given batch-local id.
std::string serialize_tuple(const Tuple& row, std::size_t id, const std::vector<std::string>& schema,
                            SerializationFormat format);

/// Header/trailer wrapped around the per-tuple fragments.
std::string serialization_header(const std::vector<std::string>& schema, SerializationFormat format);
std::string serialization_trailer(SerializationFormat format);
std::string_view serialization_separator(SerializationFormat format);

/// Full batch serialization with ids 0..n-1.
std::string serialize_tuples(std::span<const Tuple> rows, SerializationFormat format);

/// Canonical, key-sorted JSON of a tuple; the identity used for dedup and caching.
std::string canonical_tuple(const Tuple& row);

std::int64_t estimate_tokens(std::string_view text);

/// User-supplied meta-prompt replacement with {{user_prompt}}, {{tuples}}, {{contract}} slots.
class PromptTemplate {
 public:
  /// Throws Error(InvalidTemplate) on unknown or unterminated placeholders.
  static PromptTemplate parse(std::string text);

  const std::string& text() const noexcept { return text_; }
  bool operator==(const PromptTemplate&) const = default;

  /// Renders the text before {{tuples}} and the text after it.
  std::pair<std::string, std::string> render(std::string_view user_prompt,
                                             std::string_view contract) const;

 private:
  std::string text_;
};

struct RenderedPrompt {
  std::string static_prefix;
  std::string dynamic_suffix;
  std::int64_t estimated_tokens = 0;

  std::string full() const { return static_prefix + dynamic_suffix; }
};

/// Prefix only depends on (kind, user prompt, schema, format, contract, template).
std::string build_static_prefix(FunctionKind kind, std::string_view user_prompt,
                                const std::vector<std::string>& schema, SerializationFormat format,
                                const OutputContract& contract,
                                const PromptTemplate* override_template = nullptr);

RenderedPrompt build_meta_prompt(FunctionKind kind, std::string_view user_prompt,
                                 std::span<const Tuple> rows, SerializationFormat format,
                                 const OutputContract& contract,
                                 const PromptTemplate* override_template = nullptr);

/// Response-format section for a contract; also what {{contract}} expands to.
std::string contract_instructions(const OutputContract& contract);

/// Recovers the contract from a rendered prefix (the mock provider uses this).
std::optional<ContractKind> detect_contract(std::string_view prompt_text);

/// Per-tuple answers keyed by batch-local id. nullopt: envelope did not parse.
std::optional<std::map<std::size_t, Json>> parse_tuple_answers(std::string_view response);
/// {"answer": ...}. nullopt: envelope did not parse.
std::optional<Json> parse_single_answer(std::string_view response);
/// {"ranking": [...]}. nullopt: envelope did not parse or is not a list of ids.
std::optional<std::vector<std::size_t>> parse_ranking(std::string_view response);

struct SerializedTuple {
  std::size_t id = 0;
  Json fields = Json::object();  // column -> value (strings for XML/Markdown)
};

/// Tolerant inverse of serialize_tuples; detects the format from the text.
std::vector<SerializedTuple> parse_serialized_tuples(std::string_view text);

}  // namespace flockmtl
