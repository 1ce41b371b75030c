#include "flock/explain.hpp"

#include <functional>
#include <sstream>

namespace flockmtl {

namespace {

double ms(std::chrono::microseconds us) { return static_cast<double>(us.count()) / 1000.0; }

std::vector<std::string> tuple_labels(const LlmNodeInfo& llm) {
  std::vector<std::string> out;
  for (const auto& [label, expr] : llm.tuple) out.push_back(label);
  return out;
}

Json llm_details(const PlanNode& n, const NodeStats* stats, const ExecOverrides& overrides) {
  const LlmNodeInfo& llm = *n.llm;
  LlmCall call = overrides.apply(n.id, llm.call);
  Json d;
  d["function"] = function_name(call.kind);
  d["model"] = llm.model_label;
  d["model_id"] = call.model.model_id;
  d["provider"] = call.model.provider_id;
  d["context_window_tokens"] = call.model.context_window_tokens;
  d["prompt"] = llm.prompt_label;
  d["user_prompt"] = call.prompt_text;
  d["tuple_columns"] = tuple_labels(llm);
  d["serialization_format"] = format_name(call.format);
  d["batch_mode"] = call.batch_mode.to_string();
  d["batch_size_mode"] = call.batch_mode.to_string();
  d["prompt_template"] = call.prompt_template ? Json(call.prompt_template->text()) : Json(nullptr);
  if (stats && !stats->meta_prompt.empty()) {
    d["meta_prompt_full"] = stats->meta_prompt;
  } else if (call.kind == FunctionKind::Embedding) {
    d["meta_prompt_full"] = "";
  } else {
    d["meta_prompt_full"] = job_prefix(call.job({}), tuple_labels(llm));
  }
  if (stats && stats->inference) {
    const InferenceStats& s = *stats->inference;
    d["effective_batch_sizes"] = s.effective_batch_sizes;
    d["attempt_sizes"] = s.attempt_sizes;
    d["provider_calls"] = s.provider_calls;
    d["cache_hits"] = s.cache_hits;
    d["tuples_sent"] = s.tuples_sent;
    d["input_rows"] = s.input_rows;
    d["distinct_rows"] = s.distinct_rows;
    d["null_outputs"] = s.null_outputs;
    d["warnings"] = s.warnings;
    d["wall_time_ms"] = ms(s.wall_time);
  }
  return d;
}

}  // namespace

Json export_plan(const LogicalPlan& plan, const QueryResult* result, const ExecOverrides& overrides,
                 const std::string& sql) {
  Json nodes = Json::array();
  for (const PlanNode* n : plan.nodes()) {
    Json j;
    j["node_id"] = n->id;
    j["kind"] = plan_kind_name(n->kind);
    j["detail"] = n->detail;
    Json children = Json::array();
    for (const auto& c : n->children) children.push_back(c->id);
    j["children"] = children;
    Json columns = Json::array();
    for (const auto& c : n->schema) {
      columns.push_back(c.qualifier.empty() || c.hidden ? c.name : c.qualifier + "." + c.name);
    }
    j["columns"] = columns;
    const NodeStats* stats = nullptr;
    if (result) {
      auto it = result->stats.find(n->id);
      if (it != result->stats.end()) stats = &it->second;
    }
    if (stats) {
      j["rows_out"] = stats->rows_out;
      j["wall_time_ms"] = ms(stats->wall_time);
    }
    if (n->kind == PlanKind::LlmScalar || n->kind == PlanKind::LlmAggregate) {
      j["llm_details"] = llm_details(*n, stats, overrides);
    }
    nodes.push_back(std::move(j));
  }
  Json out;
  out["sql"] = sql;
  out["root"] = plan.root ? plan.root->id : -1;
  out["nodes"] = nodes;
  out["overrides"] = overrides.to_json();
  if (result) {
    out["query_wall_time_ms"] = ms(result->wall_time);
    out["provider_calls"] = result->provider_calls();
    out["row_count"] = result->rows.size();
  }
  return out;
}

std::string explain_text(const LogicalPlan& plan, const QueryResult* result) {
  std::ostringstream out;
  std::function<void(const PlanNode&, int)> walk = [&](const PlanNode& n, int depth) {
    out << std::string(static_cast<std::size_t>(depth) * 2, ' ') << "#" << n.id << " " << plan_kind_name(n.kind);
    if (!n.detail.empty()) out << "  " << n.detail;
    if (result) {
      auto it = result->stats.find(n.id);
      if (it != result->stats.end()) {
        out << "  [rows=" << it->second.rows_out << " time=" << ms(it->second.wall_time) << "ms";
        if (it->second.inference) {
          const auto& s = *it->second.inference;
          out << " calls=" << s.provider_calls << " cache_hits=" << s.cache_hits << " batch=" << it->second.batch_mode;
        }
        out << "]";
      }
    }
    out << "\n";
    for (const auto& c : n.children) walk(*c, depth + 1);
  };
  if (plan.root) walk(*plan.root, 0);
  return out.str();
}

}  // namespace flockmtl
