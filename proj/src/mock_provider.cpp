#include "flock/mock_provider.hpp"

#include <cctype>
#include <cmath>
#include <thread>

namespace flockmtl {

std::uint64_t stable_hash(std::string_view text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

namespace mock {

RequestPredicate any() {
  return [](const ChatRequest&) { return true; };
}

RequestPredicate contains(std::string needle) {
  return [needle = std::move(needle)](const ChatRequest& r) {
    return r.system_text.find(needle) != std::string::npos ||
           r.user_text.find(needle) != std::string::npos;
  };
}

}  // namespace mock

MockBackend::MockBackend(std::shared_ptr<const ProviderRegistry> registry)
    : registry_(std::move(registry)) {}

MockBackend& MockBackend::echo(RequestPredicate when) {
  std::lock_guard lock(mutex_);
  Rule r;
  r.when = std::move(when);
  r.echo = true;
  rules_.push_back(std::move(r));
  return *this;
}

MockBackend& MockBackend::script(RequestPredicate when, std::vector<MockReply> steps) {
  std::lock_guard lock(mutex_);
  Rule r;
  r.when = std::move(when);
  r.steps = std::move(steps);
  rules_.push_back(std::move(r));
  return *this;
}

MockBackend& MockBackend::answer_per_tuple(RequestPredicate when, TupleAnswer fn) {
  std::lock_guard lock(mutex_);
  Rule r;
  r.when = std::move(when);
  r.per_tuple = std::move(fn);
  rules_.push_back(std::move(r));
  return *this;
}

MockBackend& MockBackend::answer_group(RequestPredicate when, GroupAnswer fn) {
  std::lock_guard lock(mutex_);
  Rule r;
  r.when = std::move(when);
  r.group = std::move(fn);
  rules_.push_back(std::move(r));
  return *this;
}

MockBackend& MockBackend::rank(RequestPredicate when, Ranker fn) {
  std::lock_guard lock(mutex_);
  Rule r;
  r.when = std::move(when);
  r.ranker = std::move(fn);
  rules_.push_back(std::move(r));
  return *this;
}

MockBackend& MockBackend::overflow_above(std::size_t max_tuples) {
  std::lock_guard lock(mutex_);
  overflow_above_ = max_tuples;
  return *this;
}

MockBackend& MockBackend::overflow_when(RequestPredicate when) {
  std::lock_guard lock(mutex_);
  overflow_rules_.push_back(std::move(when));
  return *this;
}

void MockBackend::set_latency(LatencyModel latency) {
  std::lock_guard lock(mutex_);
  latency_ = latency;
}

void MockBackend::set_default_dimension(std::size_t dim) {
  std::lock_guard lock(mutex_);
  default_dimension_ = dim;
}

std::vector<std::size_t> MockBackend::tuples_per_request() const {
  std::lock_guard lock(mutex_);
  return tuples_per_request_;
}

std::vector<ChatRequest> MockBackend::request_log() const {
  std::lock_guard lock(mutex_);
  return log_;
}

void MockBackend::reset_counters() {
  std::lock_guard lock(mutex_);
  chat_calls_ = 0;
  embed_calls_ = 0;
  tuples_per_request_.clear();
  log_.clear();
}

void MockBackend::simulate_latency(std::size_t units) const {
  LatencyModel lat;
  {
    std::lock_guard lock(mutex_);
    lat = latency_;
  }
  auto total = lat.fixed + lat.per_tuple * static_cast<std::int64_t>(units);
  if (total.count() > 0) std::this_thread::sleep_for(total);
}

ChatResponse MockBackend::chat(const ChatRequest& request) {
  ++chat_calls_;
  auto tuples = parse_serialized_tuples(request.user_text);
  auto contract = detect_contract(request.system_text);
  if (!contract) contract = detect_contract(request.user_text);

  Rule* matched = nullptr;
  bool overflow = false;
  {
    std::lock_guard lock(mutex_);
    tuples_per_request_.push_back(tuples.size());
    log_.push_back(request);
    if (overflow_above_ && tuples.size() > *overflow_above_) overflow = true;
    for (const auto& pred : overflow_rules_) {
      if (pred(request)) overflow = true;
    }
    if (registry_) {
      if (auto info = registry_->find_model(request.model_id)) {
        auto tokens = estimate_tokens(request.system_text) + estimate_tokens(request.user_text);
        if (tokens > info->context_window_tokens) overflow = true;
      }
    }
    if (!overflow) {
      for (auto& rule : rules_) {
        if (rule.when(request)) {
          matched = &rule;
          break;
        }
      }
    }
  }
  simulate_latency(tuples.size());
  if (overflow) {
    throw ProviderError(ProviderErrorKind::ContextOverflow,
                        "This model's maximum context length was exceeded");
  }
  ChatResponse out;
  out.text = respond(request, tuples, contract, matched);
  out.prompt_tokens = estimate_tokens(request.system_text) + estimate_tokens(request.user_text);
  out.completion_tokens = estimate_tokens(out.text);
  return out;
}

std::string MockBackend::respond(const ChatRequest& request, const std::vector<SerializedTuple>& tuples,
                                 std::optional<ContractKind> contract, Rule* rule) {
  if (rule == nullptr) return default_response(contract, tuples);
  if (rule->echo) return request.user_text;
  if (!rule->steps.empty()) {
    MockReply step;
    {
      std::lock_guard lock(mutex_);
      step = rule->steps[std::min(rule->next_step, rule->steps.size() - 1)];
      ++rule->next_step;
    }
    if (const auto* kind = std::get_if<ProviderErrorKind>(&step.outcome)) {
      throw ProviderError(*kind, "scripted failure");
    }
    return std::get<std::string>(step.outcome);
  }
  if (rule->per_tuple) {
    Json answers = Json::array();
    for (const auto& t : tuples) answers.push_back({{"id", t.id}, {"value", rule->per_tuple(t)}});
    return Json{{"answers", answers}}.dump();
  }
  if (rule->group) return Json{{"answer", rule->group(tuples)}}.dump();
  if (rule->ranker) return Json{{"ranking", rule->ranker(tuples)}}.dump();
  return default_response(contract, tuples);
}

std::string MockBackend::default_response(std::optional<ContractKind> contract,
                                          const std::vector<SerializedTuple>& tuples) {
  // Format-independent: XML and Markdown carry strings where JSON carries typed values.
  auto fingerprint = [](const SerializedTuple& t) {
    std::string key;
    for (const auto& [k, v] : t.fields.items()) {
      key += k + "=" + (v.is_string() ? v.get<std::string>() : v.dump()) + "\x1f";
    }
    return stable_hash(key);
  };
  if (!contract) return "mock response";
  switch (*contract) {
    case ContractKind::TextPerTuple:
    case ContractKind::JsonPerTuple:
    case ContractKind::BoolPerTuple: {
      Json answers = Json::array();
      for (const auto& t : tuples) {
        auto h = fingerprint(t);
        Json value;
        if (*contract == ContractKind::BoolPerTuple) {
          value = (h % 2) == 0;
        } else if (*contract == ContractKind::JsonPerTuple) {
          value = {{"digest", static_cast<std::int64_t>(h % 1000003)}};
        } else {
          value = "mock:" + std::to_string(h % 1000003);
        }
        answers.push_back({{"id", t.id}, {"value", value}});
      }
      return Json{{"answers", answers}}.dump();
    }
    case ContractKind::SingleText:
      return Json{{"answer", "summary of " + std::to_string(tuples.size()) + " tuples"}}.dump();
    case ContractKind::SingleJson:
      return Json{{"answer", {{"count", tuples.size()}}}}.dump();
    case ContractKind::Ranking: {
      std::vector<std::size_t> ids;
      for (const auto& t : tuples) ids.push_back(t.id);
      return Json{{"ranking", ids}}.dump();
    }
  }
  return "mock response";
}

EmbeddingVector MockBackend::embed_text(const std::string& text, std::size_t dimension) {
  EmbeddingVector v(dimension, 0.0);
  std::string token;
  auto flush = [&] {
    if (token.empty()) return;
    auto h = stable_hash(token);
    v[h % dimension] += ((h >> 32) & 1) ? 1.0 : -1.0;
    token.clear();
  };
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      token += static_cast<char>(std::tolower(c));
    } else {
      flush();
    }
  }
  flush();
  // Small constant component keeps every vector non-zero.
  v[0] += 0.01;
  return v;
}

std::vector<EmbeddingVector> MockBackend::embed(const std::string& model_id,
                                                const std::vector<std::string>& texts) {
  ++embed_calls_;
  std::size_t dim;
  {
    std::lock_guard lock(mutex_);
    dim = default_dimension_;
    if (registry_) {
      if (auto info = registry_->find_model(model_id); info && info->embedding_dimension) {
        dim = *info->embedding_dimension;
      }
    }
  }
  simulate_latency(texts.size());
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(embed_text(t, dim));
  return out;
}

}  // namespace flockmtl
