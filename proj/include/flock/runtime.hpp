#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "flock/cache.hpp"
#include "flock/catalog.hpp"
#include "flock/prompt.hpp"
#include "flock/provider.hpp"

namespace flockmtl {

/// Auto (context-window driven) or a fixed number of tuples per request.
class BatchMode {
 public:
  static BatchMode automatic() { return BatchMode(); }
  /// Throws Error(InvalidOverride) when n == 0.
  static BatchMode manual(std::size_t n);
  /// Accepts "auto"/"Auto", a positive integer, or a numeric string.
  static BatchMode from_json(const Json& j);

  bool is_auto() const noexcept { return size_ == 0; }
  std::size_t size() const noexcept { return size_; }
  std::string to_string() const;  // "Auto" or "Manual(30)"

  bool operator==(const BatchMode&) const = default;

 private:
  std::size_t size_ = 0;
};

struct InferenceJob {
  FunctionKind kind = FunctionKind::Complete;
  ModelResource model;
  std::string prompt_text;
  std::vector<Tuple> rows;
  SerializationFormat format = SerializationFormat::Xml;
  OutputContract contract;
  BatchMode batch_mode;
  std::optional<PromptTemplate> prompt_template;
  /// false: ignore cached predictions; results are still written back.
  bool use_cache = true;
};

struct BatchPlan {
  std::vector<std::vector<std::size_t>> batches;  // indices into the distinct rows
  std::int64_t budget_tokens = 0;
  std::vector<bool> oversized;  // per batch: a single row larger than the budget
};

struct InferenceStats {
  std::size_t input_rows = 0;
  std::size_t distinct_rows = 0;
  std::size_t provider_calls = 0;
  std::size_t tuples_sent = 0;
  std::size_t cache_hits = 0;
  std::size_t null_outputs = 0;
  std::size_t warnings = 0;
  std::vector<std::size_t> effective_batch_sizes;  // successful requests
  std::vector<std::size_t> attempt_sizes;          // every request, including failed ones
  std::chrono::microseconds wall_time{0};
  std::string sample_prompt;  // full meta-prompt of the first request

  /// Adds counters; batch-size lists are appended.
  void merge(const InferenceStats& other);
  Json to_json() const;
};

struct DedupResult {
  std::vector<Tuple> distinct;
  /// Input row -> distinct row; nullopt for tuples whose values are all NULL.
  std::vector<std::optional<std::size_t>> back_map;
};

DedupResult dedup(std::span<const Tuple> rows);

/// min(max_output_tokens, 25 % of the context window).
std::int64_t output_reserve(const ModelResource& model);

/// Static prefix for a job over rows with the given schema.
std::string job_prefix(const InferenceJob& job, const std::vector<std::string>& schema);

BatchPlan plan_batches(const InferenceJob& job, std::span<const Tuple> distinct_rows);

/// Shrink step on ContextOverflow: floor(0.9 n), decreasing by at least one, never below 1.
std::size_t shrink_batch(std::size_t n);

/// Cache identity of one tuple under a job; independent of batching.
std::string tuple_cache_key(const InferenceJob& job, const Tuple& row);

struct RuntimeOptions {
  std::size_t max_parallel = 4;
  std::size_t embedding_batch_max = 512;
};

struct ScalarOutcome {
  std::vector<std::optional<Json>> outputs;  // aligned with job.rows
  InferenceStats stats;
};

struct EmbeddingOutcome {
  std::vector<std::optional<EmbeddingVector>> vectors;  // aligned with input texts
  InferenceStats stats;
};

struct SingleOutcome {
  enum class Status { Ok, Overflow, Invalid };
  Status status = Status::Invalid;
  Json value;
  InferenceStats stats;
};

/// Validates a parsed single-output answer (e.g. that a ranking is a permutation).
using AnswerValidator = std::function<bool(const Json&)>;

/// Dedup, cache probe, batch planning, bounded parallel dispatch with overflow backoff.
class InferenceRuntime {
 public:
  InferenceRuntime(std::shared_ptr<const ProviderHub> providers, std::shared_ptr<PredictionCache> cache,
                   RuntimeOptions options = {});

  /// One batch of distinct rows; shrinks by 10 % on ContextOverflow.
  std::vector<std::optional<Json>> run_batch_with_backoff(const InferenceJob& job,
                                                          std::span<const Tuple> batch,
                                                          InferenceStats& stats) const;

  /// Per-tuple outputs aligned with `job.rows`.
  ScalarOutcome get_or_compute(const InferenceJob& job) const;

  /// One request over all `job.rows` for single-answer and ranking contracts.
  /// Overflow is reported, not retried; invalid answers are retried once.
  SingleOutcome complete_single(const InferenceJob& job, const AnswerValidator& validate = {}) const;

  /// Embeddings batched by count (`batch_mode` Manual(n) caps each request at n texts).
  EmbeddingOutcome embed(const ModelResource& model, std::span<const std::string> texts,
                         BatchMode batch_mode = BatchMode::automatic(), bool use_cache = true) const;

  const RuntimeOptions& options() const noexcept { return options_; }
  PredictionCache& cache() const { return *cache_; }
  const ProviderHub& providers() const { return *providers_; }

 private:
  ChatRequest make_request(const InferenceJob& job, const RenderedPrompt& prompt) const;

  std::shared_ptr<const ProviderHub> providers_;
  std::shared_ptr<PredictionCache> cache_;
  RuntimeOptions options_;
};

/// Runs fn(0..count-1) on at most `max_parallel` threads; rethrows the first exception.
void run_parallel(std::size_t count, std::size_t max_parallel, const std::function<void(std::size_t)>& fn);

}  // namespace flockmtl
