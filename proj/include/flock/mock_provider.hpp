#pragma once

#include <atomic>
#include <deque>
#include <chrono>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "flock/prompt.hpp"
#include "flock/provider.hpp"

namespace flockmtl {

/// Simulated service time: `fixed` per request plus `per_tuple` per tuple (or text) sent.
struct LatencyModel {
  std::chrono::milliseconds fixed{0};
  std::chrono::milliseconds per_tuple{0};
};

/// A scripted step: raw response text or an error of the given kind.
struct MockReply {
  std::variant<std::string, ProviderErrorKind> outcome;

  static MockReply text(std::string t) { return {std::move(t)}; }
  static MockReply error(ProviderErrorKind kind) { return {kind}; }
};

using RequestPredicate = std::function<bool(const ChatRequest&)>;

namespace mock {
RequestPredicate any();
/// True when system or user text contains `needle`.
RequestPredicate contains(std::string needle);
}  // namespace mock

/// Deterministic, scriptable stand-in for a chat/embedding provider.
///
/// Rules are tried in registration order; the first match answers. Requests
/// that match no rule get a default deterministic answer derived from the
/// tuples and the output contract found in the prompt.
class MockBackend final : public ModelBackend {
 public:
  using TupleAnswer = std::function<Json(const SerializedTuple&)>;
  using GroupAnswer = std::function<Json(const std::vector<SerializedTuple>&)>;
  using Ranker = std::function<std::vector<std::size_t>(const std::vector<SerializedTuple>&)>;

  explicit MockBackend(std::shared_ptr<const ProviderRegistry> registry = nullptr);

  /// Echo: response text equals the request's user text.
  MockBackend& echo(RequestPredicate when);
  /// Consumes `steps` in order for matching requests; the last step repeats.
  MockBackend& script(RequestPredicate when, std::vector<MockReply> steps);
  /// Builds the {"answers": ...} envelope from a per-tuple function.
  MockBackend& answer_per_tuple(RequestPredicate when, TupleAnswer fn);
  /// Builds {"answer": ...} for single-output contracts.
  MockBackend& answer_group(RequestPredicate when, GroupAnswer fn);
  /// Builds {"ranking": ...}.
  MockBackend& rank(RequestPredicate when, Ranker fn);

  /// Requests carrying more than `max_tuples` tuples fail with ContextOverflow.
  MockBackend& overflow_above(std::size_t max_tuples);
  /// Matching requests fail with ContextOverflow (checked before rules).
  MockBackend& overflow_when(RequestPredicate when);

  void set_latency(LatencyModel latency);
  /// Dimension for models missing from the registry (default 8).
  void set_default_dimension(std::size_t dim);

  ChatResponse chat(const ChatRequest& request) override;
  std::vector<EmbeddingVector> embed(const std::string& model_id,
                                     const std::vector<std::string>& texts) override;

  std::size_t chat_calls() const { return chat_calls_.load(); }
  std::size_t embed_calls() const { return embed_calls_.load(); }
  /// Number of tuples in each chat request, in arrival order.
  std::vector<std::size_t> tuples_per_request() const;
  std::vector<ChatRequest> request_log() const;
  void reset_counters();

  /// Deterministic embedding for `text`: hashed bag of words, never all-zero.
  static EmbeddingVector embed_text(const std::string& text, std::size_t dimension);

 private:
  struct Rule {
    RequestPredicate when;
    std::vector<MockReply> steps;
    std::size_t next_step = 0;
    bool echo = false;
    TupleAnswer per_tuple;
    GroupAnswer group;
    Ranker ranker;
  };

  std::string respond(const ChatRequest& request, const std::vector<SerializedTuple>& tuples,
                      std::optional<ContractKind> contract, Rule* rule);
  static std::string default_response(std::optional<ContractKind> contract,
                                      const std::vector<SerializedTuple>& tuples);
  void simulate_latency(std::size_t units) const;

  std::shared_ptr<const ProviderRegistry> registry_;
  mutable std::mutex mutex_;
  std::deque<Rule> rules_;
  std::vector<RequestPredicate> overflow_rules_;
  std::optional<std::size_t> overflow_above_;
  LatencyModel latency_;
  std::size_t default_dimension_ = 8;
  std::atomic<std::size_t> chat_calls_{0};
  std::atomic<std::size_t> embed_calls_{0};
  std::vector<std::size_t> tuples_per_request_;
  std::vector<ChatRequest> log_;
};

/// Stable 64-bit FNV-1a, used for deterministic mock outputs.
std::uint64_t stable_hash(std::string_view text);

}  // namespace flockmtl
