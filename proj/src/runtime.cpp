#include "flock/runtime.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <map>
#include <mutex>
#include <thread>
#include <unordered_map>

namespace flockmtl {

BatchMode BatchMode::manual(std::size_t n) {
  if (n == 0) throw Error(ErrorCode::InvalidOverride, "manual batch size must be >= 1");
  BatchMode m;
  m.size_ = n;
  return m;
}

BatchMode BatchMode::from_json(const Json& j) {
  if (j.is_null()) return automatic();
  if (j.is_number_integer()) {
    auto n = j.get<std::int64_t>();
    if (n < 1) throw Error(ErrorCode::InvalidOverride, "batch size must be >= 1");
    return manual(static_cast<std::size_t>(n));
  }
  if (j.is_string()) {
    auto s = j.get<std::string>();
    std::string lower;
    for (char c : s) lower += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (lower == "auto") return automatic();
    if (!s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); })) {
      return manual(std::stoull(s));
    }
  }
  throw Error(ErrorCode::InvalidOverride, "batch size must be \"auto\" or a positive integer");
}

std::string BatchMode::to_string() const {
  return is_auto() ? "Auto" : "Manual(" + std::to_string(size_) + ")";
}

void InferenceStats::merge(const InferenceStats& other) {
  provider_calls += other.provider_calls;
  tuples_sent += other.tuples_sent;
  cache_hits += other.cache_hits;
  null_outputs += other.null_outputs;
  warnings += other.warnings;
  effective_batch_sizes.insert(effective_batch_sizes.end(), other.effective_batch_sizes.begin(),
                               other.effective_batch_sizes.end());
  attempt_sizes.insert(attempt_sizes.end(), other.attempt_sizes.begin(), other.attempt_sizes.end());
  if (sample_prompt.empty()) sample_prompt = other.sample_prompt;
}

Json InferenceStats::to_json() const {
  return {{"input_rows", input_rows},
          {"distinct_rows", distinct_rows},
          {"provider_calls", provider_calls},
          {"tuples_sent", tuples_sent},
          {"cache_hits", cache_hits},
          {"null_outputs", null_outputs},
          {"warnings", warnings},
          {"effective_batch_sizes", effective_batch_sizes},
          {"attempt_sizes", attempt_sizes},
          {"wall_time_ms", static_cast<double>(wall_time.count()) / 1000.0}};
}

DedupResult dedup(std::span<const Tuple> rows) {
  DedupResult out;
  out.back_map.reserve(rows.size());
  std::unordered_map<std::string, std::size_t> seen;
  for (const auto& row : rows) {
    bool all_null = std::all_of(row.begin(), row.end(), [](const auto& kv) { return kv.second.is_null(); });
    if (all_null) {
      out.back_map.push_back(std::nullopt);
      continue;
    }
    auto [it, inserted] = seen.emplace(canonical_tuple(row), out.distinct.size());
    if (inserted) out.distinct.push_back(row);
    out.back_map.push_back(it->second);
  }
  return out;
}

std::int64_t output_reserve(const ModelResource& model) {
  return std::min(model.max_output_tokens, model.context_window_tokens / 4);
}

std::string job_prefix(const InferenceJob& job, const std::vector<std::string>& schema) {
  return build_static_prefix(job.kind, job.prompt_text, schema, job.format, job.contract,
                             job.prompt_template ? &*job.prompt_template : nullptr);
}

std::size_t shrink_batch(std::size_t n) {
  if (n <= 1) return 1;
  std::size_t next = (n * 9) / 10;
  return std::max<std::size_t>(1, std::min(next, n - 1));
}

BatchPlan plan_batches(const InferenceJob& job, std::span<const Tuple> distinct_rows) {
  BatchPlan plan;
  auto schema = tuple_schema(distinct_rows);
  auto prefix = job_prefix(job, schema);
  plan.budget_tokens = job.model.context_window_tokens - estimate_tokens(prefix) - output_reserve(job.model);
  if (distinct_rows.empty()) return plan;

  if (!job.batch_mode.is_auto()) {
    const std::size_t n = job.batch_mode.size();
    for (std::size_t start = 0; start < distinct_rows.size(); start += n) {
      std::vector<std::size_t> batch;
      for (std::size_t i = start; i < std::min(start + n, distinct_rows.size()); ++i) batch.push_back(i);
      plan.batches.push_back(std::move(batch));
      plan.oversized.push_back(false);
    }
    return plan;
  }

  std::int64_t overhead = estimate_tokens(serialization_header(schema, job.format)) +
                          estimate_tokens(serialization_trailer(job.format));
  if (job.prompt_template) {
    overhead += estimate_tokens(job.prompt_template->render(job.prompt_text, contract_instructions(job.contract)).second);
  }
  const std::int64_t separator = estimate_tokens(serialization_separator(job.format));

  std::vector<std::size_t> current;
  std::int64_t used = overhead;
  auto close = [&](bool oversized) {
    plan.batches.push_back(std::move(current));
    plan.oversized.push_back(oversized);
    current.clear();
    used = overhead;
  };
  for (std::size_t i = 0; i < distinct_rows.size(); ++i) {
    auto cost = [&](std::size_t local_id) {
      return estimate_tokens(serialize_tuple(distinct_rows[i], local_id, schema, job.format)) +
             (local_id > 0 ? separator : 0);
    };
    std::int64_t c = cost(current.size());
    if (!current.empty() && used + c > plan.budget_tokens) {
      close(false);
      c = cost(0);
    }
    if (current.empty() && overhead + c > plan.budget_tokens) {
      current.push_back(i);
      close(true);
      continue;
    }
    current.push_back(i);
    used += c;
  }
  if (!current.empty()) close(false);
  return plan;
}

std::string tuple_cache_key(const InferenceJob& job, const Tuple& row) {
  Json key = {
      {"provider", job.model.provider_id},
      {"model", job.model.model_id},
      {"params", job.model.params.to_json()},
      {"function", function_name(job.kind)},
      {"prompt", job.prompt_text},
      {"format", format_name(job.format)},
      {"contract", contract_name(job.contract.kind)},
      {"schema_hint", job.contract.schema_hint ? Json(*job.contract.schema_hint) : Json(nullptr)},
      {"template", job.prompt_template ? Json(job.prompt_template->text()) : Json(nullptr)},
      {"tuple", canonical_tuple(row)},
  };
  return sha256_hex(key.dump());
}

void run_parallel(std::size_t count, std::size_t max_parallel,
                  const std::function<void(std::size_t)>& fn) {
  if (count == 0) return;
  std::size_t workers = std::max<std::size_t>(1, std::min(count, max_parallel));
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::atomic<bool> stop{false};
  {
    std::vector<std::jthread> threads;
    for (std::size_t w = 0; w < workers; ++w) {
      threads.emplace_back([&] {
        while (!stop) {
          std::size_t i = next++;
          if (i >= count) return;
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
            stop = true;
          }
        }
      });
    }
  }
  if (failure) std::rethrow_exception(failure);
}

InferenceRuntime::InferenceRuntime(std::shared_ptr<const ProviderHub> providers,
                                   std::shared_ptr<PredictionCache> cache, RuntimeOptions options)
    : providers_(std::move(providers)), cache_(std::move(cache)), options_(options) {
  if (!cache_) cache_ = std::make_shared<PredictionCache>();
}

ChatRequest InferenceRuntime::make_request(const InferenceJob& job, const RenderedPrompt& prompt) const {
  ChatRequest req;
  req.model_id = job.model.model_id;
  req.system_text = prompt.static_prefix;
  req.user_text = prompt.dynamic_suffix;
  req.params = job.model.params;
  req.json_mode = true;  // every contract answers with a JSON envelope
  return req;
}

std::vector<std::optional<Json>> InferenceRuntime::run_batch_with_backoff(const InferenceJob& job,
                                                                          std::span<const Tuple> batch,
                                                                          InferenceStats& stats) const {
  std::vector<std::optional<Json>> outputs(batch.size());
  const auto& client = providers_->client(job.model.provider_id);
  const PromptTemplate* tmpl = job.prompt_template ? &*job.prompt_template : nullptr;

  std::size_t pos = 0;
  std::size_t size = batch.size();
  while (pos < batch.size()) {
    const std::size_t take = std::min(size, batch.size() - pos);
    auto chunk = batch.subspan(pos, take);
    auto prompt = build_meta_prompt(job.kind, job.prompt_text, chunk, job.format, job.contract, tmpl);

    // A lone tuple that cannot fit the window is never sent.
    if (take == 1 && prompt.estimated_tokens > job.model.context_window_tokens) {
      ++stats.warnings;
      ++pos;
      continue;
    }

    std::optional<std::map<std::size_t, Json>> answers;
    bool overflowed = false;
    for (int parse_attempt = 0; parse_attempt < 2 && !answers && !overflowed; ++parse_attempt) {
      if (stats.sample_prompt.empty()) stats.sample_prompt = prompt.full();
      stats.attempt_sizes.push_back(take);
      ++stats.provider_calls;
      try {
        auto response = client.chat_complete(make_request(job, prompt));
        answers = parse_tuple_answers(response.text);
      } catch (const ProviderError& e) {
        if (e.kind() != ProviderErrorKind::ContextOverflow) throw;
        overflowed = true;
      }
    }

    if (overflowed) {
      if (take == 1) {
        ++stats.warnings;  // singleton overflow: NULL
        ++pos;
      } else {
        size = shrink_batch(take);
      }
      continue;
    }

    if (!answers) {
      stats.warnings += 1;  // envelope unparseable twice: whole chunk NULL
    } else {
      stats.effective_batch_sizes.push_back(take);
      for (std::size_t i = 0; i < take; ++i) {
        auto it = answers->find(i);
        if (it == answers->end()) {
          ++stats.warnings;
          continue;
        }
        outputs[pos + i] = it->second;
      }
    }
    pos += take;
  }
  return outputs;
}

ScalarOutcome InferenceRuntime::get_or_compute(const InferenceJob& job) const {
  auto started = std::chrono::steady_clock::now();
  ScalarOutcome out;
  out.stats.input_rows = job.rows.size();

  auto deduped = dedup(job.rows);
  out.stats.distinct_rows = deduped.distinct.size();

  std::vector<std::optional<Json>> distinct_out(deduped.distinct.size());
  std::vector<std::string> keys(deduped.distinct.size());
  std::vector<std::size_t> misses;
  for (std::size_t i = 0; i < deduped.distinct.size(); ++i) {
    keys[i] = tuple_cache_key(job, deduped.distinct[i]);
    if (auto hit = job.use_cache ? cache_->get(keys[i]) : std::nullopt) {
      distinct_out[i] = std::move(*hit);
      ++out.stats.cache_hits;
    } else {
      misses.push_back(i);
    }
  }

  std::vector<Tuple> miss_rows;
  miss_rows.reserve(misses.size());
  for (auto i : misses) miss_rows.push_back(deduped.distinct[i]);
  out.stats.tuples_sent = miss_rows.size();

  if (!miss_rows.empty()) {
    auto plan = plan_batches(job, miss_rows);
    std::vector<InferenceStats> batch_stats(plan.batches.size());
    run_parallel(plan.batches.size(), options_.max_parallel, [&](std::size_t b) {
      const auto& indices = plan.batches[b];
      std::vector<Tuple> rows;
      rows.reserve(indices.size());
      for (auto i : indices) rows.push_back(miss_rows[i]);
      auto results = run_batch_with_backoff(job, rows, batch_stats[b]);
      for (std::size_t k = 0; k < indices.size(); ++k) {
        std::size_t distinct_index = misses[indices[k]];
        if (results[k]) {
          cache_->put(keys[distinct_index], *results[k]);
          distinct_out[distinct_index] = std::move(results[k]);
        }
      }
    });
    for (const auto& s : batch_stats) out.stats.merge(s);
  }

  out.outputs.reserve(job.rows.size());
  for (const auto& m : deduped.back_map) {
    if (m && distinct_out[*m]) {
      out.outputs.push_back(distinct_out[*m]);
    } else {
      out.outputs.push_back(std::nullopt);
      ++out.stats.null_outputs;
    }
  }
  out.stats.wall_time = std::chrono::duration_cast<std::chrono::microseconds>(
      std::chrono::steady_clock::now() - started);
  return out;
}

SingleOutcome InferenceRuntime::complete_single(const InferenceJob& job, const AnswerValidator& validate) const {
  auto started = std::chrono::steady_clock::now();
  SingleOutcome out;
  out.stats.input_rows = job.rows.size();
  out.stats.distinct_rows = job.rows.size();
  if (job.rows.empty()) return out;

  Json key_doc = {{"group", Json::array()}};
  for (const auto& row : job.rows) key_doc["group"].push_back(canonical_tuple(row));
  key_doc["job"] = tuple_cache_key(job, Tuple{});
  const std::string key = sha256_hex(key_doc.dump());
  if (auto hit = job.use_cache ? cache_->get(key) : std::nullopt) {
    out.status = SingleOutcome::Status::Ok;
    out.value = std::move(*hit);
    out.stats.cache_hits = job.rows.size();
    return out;
  }

  const PromptTemplate* tmpl = job.prompt_template ? &*job.prompt_template : nullptr;
  auto prompt = build_meta_prompt(job.kind, job.prompt_text, job.rows, job.format, job.contract, tmpl);
  out.stats.tuples_sent = job.rows.size();
  if (prompt.estimated_tokens > job.model.context_window_tokens) {
    out.status = SingleOutcome::Status::Overflow;
    return out;
  }
  const auto& client = providers_->client(job.model.provider_id);
  out.stats.sample_prompt = prompt.full();

  for (int attempt = 0; attempt < 2; ++attempt) {
    out.stats.attempt_sizes.push_back(job.rows.size());
    ++out.stats.provider_calls;
    ChatResponse response;
    try {
      response = client.chat_complete(make_request(job, prompt));
    } catch (const ProviderError& e) {
      if (e.kind() != ProviderErrorKind::ContextOverflow) throw;
      out.status = SingleOutcome::Status::Overflow;
      return out;
    }
    std::optional<Json> parsed;
    if (job.contract.kind == ContractKind::Ranking) {
      if (auto ranking = parse_ranking(response.text)) parsed = Json(*ranking);
    } else {
      parsed = parse_single_answer(response.text);
    }
    if (parsed && (!validate || validate(*parsed))) {
      out.status = SingleOutcome::Status::Ok;
      out.value = std::move(*parsed);
      out.stats.effective_batch_sizes.push_back(job.rows.size());
      cache_->put(key, out.value);
      break;
    }
    ++out.stats.warnings;
  }
  out.stats.wall_time = std::chrono::duration_cast<std::chrono::microseconds>(
      std::chrono::steady_clock::now() - started);
  return out;
}

EmbeddingOutcome InferenceRuntime::embed(const ModelResource& model, std::span<const std::string> texts,
                                         BatchMode batch_mode, bool use_cache) const {
  auto started = std::chrono::steady_clock::now();
  EmbeddingOutcome out;
  out.stats.input_rows = texts.size();

  std::vector<std::string> distinct;
  std::vector<std::size_t> back_map;
  std::unordered_map<std::string, std::size_t> seen;
  for (const auto& t : texts) {
    auto [it, inserted] = seen.emplace(t, distinct.size());
    if (inserted) distinct.push_back(t);
    back_map.push_back(it->second);
  }
  out.stats.distinct_rows = distinct.size();

  auto key_for = [&](const std::string& text) {
    Json k = {{"function", "llm_embedding"},
              {"provider", model.provider_id},
              {"model", model.model_id},
              {"text", text}};
    return sha256_hex(k.dump());
  };

  std::vector<std::optional<EmbeddingVector>> distinct_out(distinct.size());
  std::vector<std::size_t> misses;
  for (std::size_t i = 0; i < distinct.size(); ++i) {
    if (auto hit = use_cache ? cache_->get(key_for(distinct[i])) : std::nullopt) {
      distinct_out[i] = hit->get<EmbeddingVector>();
      ++out.stats.cache_hits;
    } else {
      misses.push_back(i);
    }
  }
  out.stats.tuples_sent = misses.size();

  const std::size_t per_request = batch_mode.is_auto() ? options_.embedding_batch_max : batch_mode.size();
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < misses.size(); start += per_request) {
    batches.emplace_back(misses.begin() + start,
                         misses.begin() + std::min(misses.size(), start + per_request));
  }

  const auto& client = providers_->client(model.provider_id);
  std::vector<InferenceStats> batch_stats(batches.size());
  run_parallel(batches.size(), options_.max_parallel, [&](std::size_t b) {
    const auto& batch = batches[b];
    auto& stats = batch_stats[b];
    std::size_t pos = 0;
    std::size_t size = batch.size();
    while (pos < batch.size()) {
      std::size_t take = std::min(size, batch.size() - pos);
      std::vector<std::string> chunk;
      for (std::size_t k = pos; k < pos + take; ++k) chunk.push_back(distinct[batch[k]]);
      stats.attempt_sizes.push_back(take);
      ++stats.provider_calls;
      try {
        auto vectors = client.embed(model.model_id, chunk);
        for (std::size_t k = 0; k < take; ++k) {
          auto index = batch[pos + k];
          cache_->put(key_for(distinct[index]), Json(vectors[k]));
          distinct_out[index] = std::move(vectors[k]);
        }
        stats.effective_batch_sizes.push_back(take);
        pos += take;
      } catch (const ProviderError& e) {
        if (e.kind() != ProviderErrorKind::ContextOverflow) throw;
        if (take == 1) {
          ++stats.warnings;
          ++pos;
        } else {
          size = shrink_batch(take);
        }
      }
    }
  });
  for (const auto& s : batch_stats) out.stats.merge(s);

  for (auto m : back_map) {
    out.vectors.push_back(distinct_out[m]);
    if (!distinct_out[m]) ++out.stats.null_outputs;
  }
  out.stats.wall_time = std::chrono::duration_cast<std::chrono::microseconds>(
      std::chrono::steady_clock::now() - started);
  return out;
}

}  // namespace flockmtl
