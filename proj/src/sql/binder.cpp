#include "flock/sql/binder.hpp"

#include <algorithm>
#include <unordered_map>
#include <unordered_set>

#include "flock/error.hpp"
#include "flock/sql/parser.hpp"

namespace flockmtl {

std::string_view plan_kind_name(PlanKind kind) {
  switch (kind) {
    case PlanKind::Scan: return "Scan";
    case PlanKind::TableFunction: return "TableFunction";
    case PlanKind::Values: return "Values";
    case PlanKind::Filter: return "Filter";
    case PlanKind::Project: return "Project";
    case PlanKind::Join: return "Join";
    case PlanKind::Aggregate: return "Aggregate";
    case PlanKind::Window: return "Window";
    case PlanKind::Sort: return "Sort";
    case PlanKind::Limit: return "Limit";
    case PlanKind::CteRef: return "CteRef";
    case PlanKind::LlmScalar: return "LlmScalar";
    case PlanKind::LlmAggregate: return "LlmAggregate";
    case PlanKind::FtsMatch: return "FtsMatch";
    case PlanKind::Ask: return "Ask";
  }
  return "";
}

BoundExpr BoundExpr::make_constant(Value v) {
  BoundExpr e;
  e.kind = Kind::Constant;
  e.constant = std::move(v);
  return e;
}

BoundExpr BoundExpr::make_column(std::size_t index) {
  BoundExpr e;
  e.kind = Kind::Column;
  e.column = index;
  return e;
}

std::vector<const PlanNode*> LogicalPlan::nodes() const {
  std::vector<const PlanNode*> out;
  std::vector<const PlanNode*> stack;
  if (root) stack.push_back(root.get());
  while (!stack.empty()) {
    const PlanNode* n = stack.back();
    stack.pop_back();
    out.push_back(n);
    for (auto it = n->children.rbegin(); it != n->children.rend(); ++it) stack.push_back(it->get());
  }
  return out;
}

const PlanNode* LogicalPlan::find(int node_id) const {
  for (const auto* n : nodes()) {
    if (n->id == node_id) return n;
  }
  return nullptr;
}

std::vector<std::string> LogicalPlan::output_names() const {
  std::vector<std::string> names;
  if (!root) return names;
  for (const auto& c : root->schema) {
    if (!c.hidden) names.push_back(c.name);
  }
  return names;
}

}  // namespace flockmtl

namespace flockmtl::sql {

std::vector<std::string> table_function_columns(const std::string& name) {
  if (name == "flock_models") {
    return {"name", "model_id", "provider", "context_window", "max_output", "params", "version", "scope", "created_at"};
  }
  if (name == "flock_prompts") return {"name", "text", "version", "scope", "created_at"};
  return {};
}

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

struct CteEnv {
  const Cte* cte;
  std::shared_ptr<const CteEnv> parent;
};

enum class Clause { Where, GroupBy, Select, OrderBy, On, WindowArg, AggregateArg, TupleArg };

std::string_view clause_name(Clause c) {
  switch (c) {
    case Clause::Where: return "WHERE";
    case Clause::GroupBy: return "GROUP BY";
    case Clause::Select: return "the select list";
    case Clause::OrderBy: return "ORDER BY";
    case Clause::On: return "a join condition";
    case Clause::WindowArg: return "a window function argument";
    case Clause::AggregateArg: return "an aggregate argument";
    case Clause::TupleArg: return "a tuple map";
  }
  return "";
}

struct Stage {
  std::shared_ptr<PlanNode> cur;
  std::unordered_map<std::string, std::size_t> memo;
  bool post_agg = false;
  std::vector<ColumnInfo> pre_agg_schema;
};

bool is_aggregate_call(const Expr& e) {
  if (e.kind != ExprKind::Call || e.over) return false;
  const auto* info = find_function(e.name);
  return info && e.qualifier.empty() &&
         (info->category == FunctionCategory::Aggregate || info->category == FunctionCategory::LlmAggregate);
}

/// Aggregate calls outside window frames; does not descend into aggregate arguments.
void collect_aggregates(const Expr& e, std::vector<const Expr*>& out) {
  if (is_aggregate_call(e)) {
    out.push_back(&e);
    return;
  }
  for (const auto& a : e.args) collect_aggregates(a, out);
}

void collect_windows(const Expr& e, std::vector<const Expr*>& out) {
  if (e.kind == ExprKind::Call && e.over) {
    out.push_back(&e);
    return;
  }
  for (const auto& a : e.args) collect_windows(a, out);
}

void collect_columns(const BoundExpr& e, std::vector<std::size_t>& out) {
  if (e.kind == BoundExpr::Kind::Column) out.push_back(e.column);
  for (const auto& a : e.args) collect_columns(a, out);
}

void shift_columns(BoundExpr& e, std::size_t by) {
  if (e.kind == BoundExpr::Kind::Column) e.column -= by;
  for (auto& a : e.args) shift_columns(a, by);
}

void split_conjuncts(const Expr& e, std::vector<const Expr*>& out) {
  if (e.kind == ExprKind::Binary && e.op == "AND") {
    split_conjuncts(e.args[0], out);
    split_conjuncts(e.args[1], out);
  } else {
    out.push_back(&e);
  }
}

Json literal_map(const Expr& map, const std::string& what) {
  if (map.kind != ExprKind::Map) throw Error(ErrorCode::BindingError, what + " argument must be a map literal {...}");
  Json out = Json::object();
  for (std::size_t i = 0; i < map.keys.size(); ++i) {
    const Expr& v = map.args[i];
    if (v.kind != ExprKind::Literal) {
      throw Error(ErrorCode::BindingError, "value of '" + map.keys[i] + "' in the " + what + " map must be a literal");
    }
    out[map.keys[i]] = v.literal.to_json();
  }
  return out;
}

std::string model_label(const ModelSpec& spec, const ModelResource& m) {
  if (spec.model_name) return "model_name=" + *spec.model_name + " v" + std::to_string(m.version) + " (" + m.model_id + ")";
  return "model=" + m.model_id;
}

std::string prompt_label(const PromptSpec& spec, const Catalog& catalog) {
  if (spec.prompt_name) {
    auto p = catalog.resolve_prompt(*spec.prompt_name, spec.version);
    return "prompt_name=" + *spec.prompt_name + " v" + std::to_string(p.version);
  }
  return "prompt";
}

std::size_t expected_arity_min(const std::string& fn) {
  if (fn == "array_cosine_similarity" || fn == "json_extract") return 2;
  return 1;
}

std::size_t expected_arity_max(const std::string& fn) {
  if (fn == "array_cosine_similarity" || fn == "json_extract") return 2;
  if (fn == "lower" || fn == "upper" || fn == "length" || fn == "abs") return 1;
  if (fn == "round") return 2;
  return SIZE_MAX;
}

class Planner {
 public:
  Planner(const Catalog& catalog, const BindEnvironment& env) : catalog_(catalog), env_(env) {}

  LogicalPlan run(const SelectStmt& stmt) {
    LogicalPlan plan;
    plan.root = plan_select(stmt, nullptr);
    plan.node_count = next_id_;
    return plan;
  }

 private:
  std::shared_ptr<PlanNode> make(PlanKind kind, std::vector<std::shared_ptr<PlanNode>> children = {}) {
    auto n = std::make_shared<PlanNode>();
    n->id = next_id_++;
    n->kind = kind;
    n->children = std::move(children);
    return n;
  }

  /// New node on top of the stage that keeps the input schema.
  std::shared_ptr<PlanNode> stack(Stage& st, PlanKind kind) {
    auto n = make(kind, {st.cur});
    n->schema = st.cur->schema;
    st.cur = n;
    return n;
  }

  // ---- FROM ------------------------------------------------------------------
  const Cte* find_cte(const std::string& name, const std::shared_ptr<const CteEnv>& env,
                      std::shared_ptr<const CteEnv>& defined_in) const {
    for (auto e = env; e; e = e->parent) {
      if (e->cte->name == name) {
        defined_in = e->parent;
        return e->cte;
      }
    }
    return nullptr;
  }

  std::shared_ptr<PlanNode> plan_from(const TableRef& ref, const std::shared_ptr<const CteEnv>& env) {
    switch (ref.kind) {
      case TableRef::Kind::Named: {
        const std::string qualifier = ref.alias.value_or(ref.name);
        std::shared_ptr<const CteEnv> defined_in;
        if (const Cte* cte = find_cte(ref.name, env, defined_in)) {
          auto child = plan_select(*cte->query, defined_in);
          auto node = make(PlanKind::CteRef, {child});
          node->name = ref.name;
          node->detail = ref.alias ? ref.name + " AS " + *ref.alias : ref.name;
          for (const auto& c : child->schema) {
            if (c.hidden) continue;
            node->schema.push_back({qualifier, c.name, false, c.source_table});
          }
          return node;
        }
        auto columns = env_.table_columns ? env_.table_columns(ref.name) : std::nullopt;
        if (!columns) throw Error(ErrorCode::BindingError, "unknown table '" + ref.name + "'");
        auto node = make(PlanKind::Scan);
        node->name = ref.name;
        node->detail = ref.alias ? ref.name + " AS " + *ref.alias : ref.name;
        for (const auto& c : *columns) node->schema.push_back({qualifier, c.name, false, ref.name});
        return node;
      }
      case TableRef::Kind::Function: {
        auto cols = table_function_columns(ref.name);
        if (cols.empty()) throw Error(ErrorCode::BindingError, "unknown table function '" + ref.name + "'");
        auto node = make(PlanKind::TableFunction);
        node->name = ref.name;
        node->detail = ref.name + "()";
        const std::string qualifier = ref.alias.value_or(ref.name);
        for (const auto& c : cols) node->schema.push_back({qualifier, c, false, {}});
        return node;
      }
      case TableRef::Kind::Join:
        return plan_join(ref, env);
    }
    return nullptr;
  }

  std::shared_ptr<PlanNode> plan_join(const TableRef& ref, const std::shared_ptr<const CteEnv>& env) {
    auto left = plan_from(ref.children[0], env);
    auto right = plan_from(ref.children[1], env);
    auto node = make(PlanKind::Join, {left, right});
    node->join_type = ref.join_type;
    node->schema = left->schema;
    node->schema.insert(node->schema.end(), right->schema.begin(), right->schema.end());
    const std::size_t left_width = left->schema.size();

    switch (ref.join_type) {
      case JoinType::Inner: node->detail = "INNER JOIN"; break;
      case JoinType::FullOuter: node->detail = "FULL OUTER JOIN"; break;
      case JoinType::Cross: node->detail = "CROSS JOIN"; break;
    }
    if (!ref.on) return node;
    node->detail += " ON " + to_sql(*ref.on);

    Stage st;
    st.cur = node;
    std::vector<const Expr*> conjuncts;
    split_conjuncts(*ref.on, conjuncts);
    std::optional<BoundExpr> residual;
    auto side = [&](const BoundExpr& e) {
      std::vector<std::size_t> cols;
      collect_columns(e, cols);
      if (cols.empty()) return 0;
      bool all_left = std::all_of(cols.begin(), cols.end(), [&](auto c) { return c < left_width; });
      bool all_right = std::all_of(cols.begin(), cols.end(), [&](auto c) { return c >= left_width; });
      return all_left ? 1 : all_right ? 2 : 3;
    };
    for (const Expr* c : conjuncts) {
      BoundExpr bound = bind(*c, st, Clause::On);
      if (c->kind == ExprKind::Binary && c->op == "=") {
        BoundExpr l = bound.args[0], r = bound.args[1];
        int ls = side(l), rs = side(r);
        if (ls == 2 && rs == 1) {
          std::swap(l, r);
          std::swap(ls, rs);
        }
        if (ls == 1 && rs == 2) {
          shift_columns(r, left_width);
          node->join_keys.emplace_back(std::move(l), std::move(r));
          continue;
        }
      }
      if (ref.join_type == JoinType::FullOuter) {
        throw Error(ErrorCode::BindingError,
                    "FULL OUTER JOIN supports only equality conditions between the two sides: " + to_sql(*c));
      }
      residual = residual ? BoundExpr{BoundExpr::Kind::Binary, {}, 0, "AND", {*residual, bound}, {}, false} : bound;
    }
    node->predicate = residual;
    return node;
  }

  // ---- SELECT ----------------------------------------------------------------
  std::shared_ptr<PlanNode> plan_select(const SelectStmt& s, std::shared_ptr<const CteEnv> env) {
    std::unordered_set<std::string> names;
    for (const auto& cte : s.ctes) {
      if (!names.insert(cte.name).second) {
        throw Error(ErrorCode::BindingError, "CTE '" + cte.name + "' is defined twice");
      }
      env = std::make_shared<CteEnv>(CteEnv{&cte, env});
    }

    Stage st;
    if (s.from) {
      st.cur = plan_from(*s.from, env);
    } else {
      st.cur = make(PlanKind::Values);
      st.cur->detail = "one row";
    }

    if (s.where) {
      std::vector<const Expr*> aggs;
      collect_aggregates(*s.where, aggs);
      if (!aggs.empty()) {
        throw Error(ErrorCode::MisplacedAggregate, "aggregate " + to_sql(*aggs.front()) + " is not allowed in WHERE");
      }
      BoundExpr pred = bind(*s.where, st, Clause::Where);
      auto filter = stack(st, PlanKind::Filter);
      filter->predicate = std::move(pred);
      filter->detail = to_sql(*s.where);
    }

    std::vector<OrderItem> order = resolve_order_aliases(s);

    std::vector<const Expr*> aggregates;
    for (const auto& item : s.items) collect_aggregates(item.expr, aggregates);
    for (const auto& item : order) collect_aggregates(item.expr, aggregates);
    if (!s.group_by.empty() || !aggregates.empty()) plan_aggregate(s, st, aggregates);

    std::vector<const Expr*> windows;
    for (const auto& item : s.items) collect_windows(item.expr, windows);
    for (const auto& item : order) collect_windows(item.expr, windows);
    if (!windows.empty()) plan_windows(st, windows);

    if (!order.empty()) {
      std::vector<SortKey> keys;
      std::string detail;
      for (const auto& item : order) {
        keys.push_back({bind(item.expr, st, Clause::OrderBy), item.descending});
        if (!detail.empty()) detail += ", ";
        detail += to_sql(item.expr) + (item.descending ? " DESC" : " ASC");
      }
      auto sort = stack(st, PlanKind::Sort);
      sort->sort_keys = std::move(keys);
      sort->detail = detail;
    }

    if (s.limit) {
      auto limit = stack(st, PlanKind::Limit);
      limit->limit = *s.limit;
      limit->detail = std::to_string(*s.limit);
    }

    std::vector<BoundExpr> exprs;
    std::vector<ColumnInfo> out_schema;
    std::string detail;
    for (const auto& item : s.items) {
      if (item.expr.kind == ExprKind::Star) {
        if (st.post_agg) throw Error(ErrorCode::BindingError, "* cannot be combined with aggregation");
        bool any = false;
        for (std::size_t i = 0; i < st.cur->schema.size(); ++i) {
          const auto& c = st.cur->schema[i];
          if (c.hidden || (!item.expr.qualifier.empty() && c.qualifier != item.expr.qualifier)) continue;
          exprs.push_back(BoundExpr::make_column(i));
          out_schema.push_back({{}, c.name, false, c.source_table});
          any = true;
        }
        if (!any && !item.expr.qualifier.empty()) {
          throw Error(ErrorCode::BindingError, "unknown table '" + item.expr.qualifier + "' in " + to_sql(item.expr));
        }
      } else {
        BoundExpr b = bind(item.expr, st, Clause::Select);
        ColumnInfo info;
        if (item.alias) {
          info.name = *item.alias;
        } else if (item.expr.kind == ExprKind::Column) {
          info.name = item.expr.name;
        } else {
          info.name = to_sql(item.expr);
        }
        if (b.kind == BoundExpr::Kind::Column) info.source_table = st.cur->schema[b.column].source_table;
        exprs.push_back(std::move(b));
        out_schema.push_back(std::move(info));
      }
      if (!detail.empty()) detail += ", ";
      detail += to_sql(item.expr) + (item.alias ? " AS " + *item.alias : "");
    }
    auto project = make(PlanKind::Project, {st.cur});
    project->exprs = std::move(exprs);
    project->schema = std::move(out_schema);
    project->detail = detail;
    return project;
  }

  std::vector<OrderItem> resolve_order_aliases(const SelectStmt& s) const {
    std::vector<OrderItem> out;
    for (const auto& item : s.order_by) {
      OrderItem resolved = item;
      const Expr& e = item.expr;
      if (e.kind == ExprKind::Literal && e.literal.type() == ValueType::Int) {
        auto k = e.literal.as_int();
        if (k < 1 || static_cast<std::size_t>(k) > s.items.size()) {
          throw Error(ErrorCode::BindingError, "ORDER BY position " + std::to_string(k) + " is out of range");
        }
        if (s.items[static_cast<std::size_t>(k - 1)].expr.kind == ExprKind::Star) {
          throw Error(ErrorCode::BindingError, "ORDER BY position refers to *");
        }
        resolved.expr = s.items[static_cast<std::size_t>(k - 1)].expr;
      } else if (e.kind == ExprKind::Column && e.qualifier.empty()) {
        for (const auto& si : s.items) {
          if (si.alias && *si.alias == e.name) {
            resolved.expr = si.expr;
            break;
          }
        }
      }
      out.push_back(std::move(resolved));
    }
    return out;
  }

  void plan_aggregate(const SelectStmt& s, Stage& st, const std::vector<const Expr*>& calls) {
    std::vector<BoundExpr> keys;
    for (const auto& g : s.group_by) {
      std::vector<const Expr*> nested;
      collect_aggregates(g, nested);
      if (!nested.empty()) {
        throw Error(ErrorCode::MisplacedAggregate, "aggregate " + to_sql(*nested.front()) + " is not allowed in GROUP BY");
      }
      keys.push_back(bind(g, st, Clause::GroupBy));
    }

    std::vector<AggregateSpec> specs;
    std::vector<std::string> spec_keys;
    for (const Expr* call : calls) {
      std::string key = to_sql(*call);
      if (std::find(spec_keys.begin(), spec_keys.end(), key) != spec_keys.end()) continue;
      const auto* info = find_function(call->name);
      AggregateSpec spec;
      if (info->category == FunctionCategory::LlmAggregate) {
        std::size_t col = bind_llm(*call, *info, st, Clause::Select, &keys);
        spec.function = "first";
        spec.arg = BoundExpr::make_column(col);
      } else {
        spec.function = info->name;
        for (const auto& k : call->keys) {
          if (!k.empty()) throw Error(ErrorCode::BindingError, info->name + " does not take named arguments");
        }
        if (call->args.size() != 1) throw Error(ErrorCode::BindingError, info->name + " takes exactly one argument");
        if (call->args[0].kind == ExprKind::Star) {
          if (info->name != "count") throw Error(ErrorCode::BindingError, info->name + "(*) is not supported");
        } else {
          spec.arg = bind_aggregate_arg(call->args[0], st);
        }
      }
      specs.push_back(std::move(spec));
      spec_keys.push_back(key);
    }

    auto agg = make(PlanKind::Aggregate, {st.cur});
    agg->exprs = keys;
    agg->aggregates = specs;
    std::string detail;
    for (std::size_t i = 0; i < keys.size(); ++i) {
      const Expr& g = s.group_by[i];
      if (keys[i].kind == BoundExpr::Kind::Column && g.kind == ExprKind::Column) {
        agg->schema.push_back(st.cur->schema[keys[i].column]);
      } else {
        agg->schema.push_back({{}, to_sql(g), true, {}});
      }
      detail += (detail.empty() ? "GROUP BY " : ", ") + to_sql(g);
    }
    for (const auto& k : spec_keys) {
      agg->schema.push_back({{}, k, true, {}});
      detail += (detail.empty() ? "" : "; ") + k;
    }
    agg->detail = detail;

    Stage post;
    post.cur = agg;
    post.post_agg = true;
    post.pre_agg_schema = st.cur->schema;
    for (std::size_t i = 0; i < s.group_by.size(); ++i) post.memo[to_sql(s.group_by[i])] = i;
    for (std::size_t j = 0; j < spec_keys.size(); ++j) post.memo[spec_keys[j]] = keys.size() + j;
    st = std::move(post);
  }

  BoundExpr bind_aggregate_arg(const Expr& arg, Stage& st) {
    std::vector<const Expr*> nested;
    collect_aggregates(arg, nested);
    if (!nested.empty()) {
      throw Error(ErrorCode::MisplacedAggregate, "aggregate " + to_sql(*nested.front()) + " cannot be nested");
    }
    return bind(arg, st, Clause::AggregateArg);
  }

  void plan_windows(Stage& st, const std::vector<const Expr*>& calls) {
    std::vector<AggregateSpec> specs;
    std::vector<std::string> spec_keys;
    for (const Expr* call : calls) {
      std::string key = to_sql(*call);
      if (std::find(spec_keys.begin(), spec_keys.end(), key) != spec_keys.end()) continue;
      const auto* info = find_function(call->name);
      if (!info || !call->qualifier.empty() || info->category != FunctionCategory::Aggregate) {
        throw Error(ErrorCode::BindingError, "only max/min/sum/avg/count can be used with OVER (): " + key);
      }
      if (call->args.size() != 1) throw Error(ErrorCode::BindingError, info->name + " takes exactly one argument");
      AggregateSpec spec;
      spec.function = info->name;
      if (call->args[0].kind == ExprKind::Star) {
        if (info->name != "count") throw Error(ErrorCode::BindingError, info->name + "(*) is not supported");
      } else {
        std::vector<const Expr*> nested;
        collect_windows(call->args[0], nested);
        if (!nested.empty()) throw Error(ErrorCode::BindingError, "window functions cannot be nested: " + key);
        spec.arg = bind(call->args[0], st, Clause::WindowArg);
      }
      specs.push_back(std::move(spec));
      spec_keys.push_back(key);
    }
    auto window = stack(st, PlanKind::Window);
    window->aggregates = specs;
    std::string detail;
    for (const auto& k : spec_keys) {
      st.memo[k] = window->schema.size();
      window->schema.push_back({{}, k, true, {}});
      detail += (detail.empty() ? "" : ", ") + k;
    }
    window->detail = detail;
  }

  // ---- expressions -----------------------------------------------------------
  std::size_t resolve_column(const Stage& st, const Expr& e) const {
    const auto& schema = st.cur->schema;
    std::optional<std::size_t> found;
    for (std::size_t i = 0; i < schema.size(); ++i) {
      const auto& c = schema[i];
      if (c.hidden || c.name != e.name) continue;
      if (!e.qualifier.empty() && c.qualifier != e.qualifier) continue;
      if (found) throw Error(ErrorCode::BindingError, "column reference '" + to_sql(e) + "' is ambiguous");
      found = i;
    }
    if (found) return *found;
    if (st.post_agg) {
      for (const auto& c : st.pre_agg_schema) {
        if (!c.hidden && c.name == e.name && (e.qualifier.empty() || c.qualifier == e.qualifier)) {
          throw Error(ErrorCode::BindingError,
                      "column '" + to_sql(e) + "' must appear in GROUP BY or be used in an aggregate function");
        }
      }
    }
    throw Error(ErrorCode::BindingError, "unknown column '" + to_sql(e) + "'");
  }

  BoundExpr bind(const Expr& e, Stage& st, Clause clause) {
    if (e.kind == ExprKind::Call || st.post_agg) {
      auto it = st.memo.find(to_sql(e));
      if (it != st.memo.end()) return BoundExpr::make_column(it->second);
    }
    switch (e.kind) {
      case ExprKind::Literal:
        return BoundExpr::make_constant(e.literal);
      case ExprKind::Column:
        return BoundExpr::make_column(resolve_column(st, e));
      case ExprKind::Star:
        throw Error(ErrorCode::BindingError, "* is only allowed in the select list and count(*)");
      case ExprKind::Map:
        throw Error(ErrorCode::BindingError, "map literals are only allowed as semantic function arguments");
      case ExprKind::Unary:
      case ExprKind::Binary:
      case ExprKind::Cast:
      case ExprKind::IsNull: {
        BoundExpr b;
        b.kind = e.kind == ExprKind::Unary    ? BoundExpr::Kind::Unary
                 : e.kind == ExprKind::Binary ? BoundExpr::Kind::Binary
                 : e.kind == ExprKind::Cast   ? BoundExpr::Kind::Cast
                                              : BoundExpr::Kind::IsNull;
        b.op = e.op;
        b.cast_type = e.cast_type;
        b.negated = e.negated;
        for (const auto& a : e.args) b.args.push_back(bind(a, st, clause));
        return b;
      }
      case ExprKind::Call:
        return bind_call(e, st, clause);
    }
    throw Error(ErrorCode::BindingError, "unsupported expression");
  }

  BoundExpr bind_call(const Expr& e, Stage& st, Clause clause) {
    const FunctionInfo* info = find_function(e.name);
    const bool fts_qualified = lower(e.qualifier).rfind("fts_main_", 0) == 0;
    if (!info || (!e.qualifier.empty() && !(fts_qualified && info->category == FunctionCategory::Retrieval))) {
      throw Error(ErrorCode::BindingError, "unknown function '" + (e.qualifier.empty() ? "" : e.qualifier + ".") + e.name + "'");
    }
    if (e.over) throw Error(ErrorCode::BindingError, "window function " + to_sql(e) + " is not allowed in " + std::string(clause_name(clause)));
    switch (info->category) {
      case FunctionCategory::Aggregate:
      case FunctionCategory::LlmAggregate:
        throw Error(ErrorCode::MisplacedAggregate,
                    "aggregate " + to_sql(e) + " is not allowed in " + std::string(clause_name(clause)));
      case FunctionCategory::TableFunction:
        throw Error(ErrorCode::BindingError, info->name + "() is a table function; use it in FROM");
      case FunctionCategory::LlmScalar:
        return BoundExpr::make_column(bind_llm(e, *info, st, clause, nullptr));
      case FunctionCategory::Retrieval:
        return BoundExpr::make_column(bind_fts(e, st, clause));
      case FunctionCategory::Scalar:
        break;
    }
    for (const auto& k : e.keys) {
      if (!k.empty()) throw Error(ErrorCode::BindingError, info->name + " does not take named arguments");
    }
    if (e.args.size() < expected_arity_min(info->name) || e.args.size() > expected_arity_max(info->name)) {
      throw Error(ErrorCode::BindingError, "wrong number of arguments to " + info->name + ": " + info->signature);
    }
    BoundExpr b;
    b.kind = BoundExpr::Kind::Call;
    b.op = info->name;
    for (const auto& a : e.args) b.args.push_back(bind(a, st, clause));
    return b;
  }

  std::size_t bind_llm(const Expr& e, const FunctionInfo& info, Stage& st, Clause clause,
                       const std::vector<BoundExpr>* group_keys) {
    if (clause == Clause::On) {
      throw Error(ErrorCode::BindingError, info.name + " is not allowed in " + std::string(clause_name(clause)));
    }
    for (const auto& k : e.keys) {
      if (!k.empty()) throw Error(ErrorCode::BindingError, info.name + " does not take named arguments");
    }
    const bool embedding = info.llm_kind == FunctionKind::Embedding;
    const std::size_t arity = embedding ? 2 : 3;
    if (e.args.size() != arity) {
      throw Error(ErrorCode::BindingError, "wrong number of arguments to " + info.name + ": " + info.signature);
    }
    auto model_spec = ModelSpec::from_json(literal_map(e.args[0], "model"));
    LlmNodeInfo llm;
    llm.call.kind = *info.llm_kind;
    llm.call.model = model_spec.resolve(catalog_);
    llm.model_label = model_label(model_spec, llm.call.model);
    if (!embedding) {
      auto prompt_spec = PromptSpec::from_json(literal_map(e.args[1], "prompt"));
      llm.call.prompt_text = prompt_spec.resolve(catalog_);
      llm.prompt_label = prompt_label(prompt_spec, catalog_);
    }
    const Expr& tuple = e.args.back();
    if (tuple.kind != ExprKind::Map) {
      throw Error(ErrorCode::BindingError, info.name + " needs a tuple map {'label': column, ...} as its last argument");
    }
    if (tuple.keys.empty()) throw Error(ErrorCode::BindingError, info.name + " needs at least one tuple column");
    for (std::size_t i = 0; i < tuple.keys.size(); ++i) {
      if (group_keys) {
        llm.tuple.emplace_back(tuple.keys[i], bind_aggregate_arg(tuple.args[i], st));
      } else {
        llm.tuple.emplace_back(tuple.keys[i], bind(tuple.args[i], st, Clause::TupleArg));
      }
    }
    auto node = stack(st, group_keys ? PlanKind::LlmAggregate : PlanKind::LlmScalar);
    if (group_keys) node->exprs = *group_keys;
    node->detail = to_sql(e);
    node->llm = std::move(llm);
    const std::string key = to_sql(e);
    std::size_t col = node->schema.size();
    node->schema.push_back({{}, key, true, {}});
    if (!group_keys) st.memo[key] = col;
    return col;
  }

  std::size_t bind_fts(const Expr& e, Stage& st, Clause clause) {
    if (clause == Clause::On) throw Error(ErrorCode::BindingError, "match_bm25 is not allowed in a join condition");
    std::optional<std::string> fields;
    std::vector<const Expr*> positional;
    for (std::size_t i = 0; i < e.args.size(); ++i) {
      const std::string& k = i < e.keys.size() ? e.keys[i] : std::string();
      if (k.empty()) {
        positional.push_back(&e.args[i]);
      } else if (lower(k) == "fields") {
        if (e.args[i].kind != ExprKind::Literal || e.args[i].literal.type() != ValueType::Text) {
          throw Error(ErrorCode::BindingError, "fields := must be a string literal");
        }
        fields = e.args[i].literal.as_text();
      } else {
        throw Error(ErrorCode::BindingError, "unknown named argument '" + k + "' to match_bm25");
      }
    }
    if (positional.size() == 3 && !fields) {
      if (positional[2]->kind != ExprKind::Literal || positional[2]->literal.type() != ValueType::Text) {
        throw Error(ErrorCode::BindingError, "match_bm25 fields must be a string literal");
      }
      fields = positional[2]->literal.as_text();
      positional.pop_back();
    }
    if (positional.size() != 2) {
      throw Error(ErrorCode::BindingError, "match_bm25 takes (id_column, 'query'[, fields := 'column'])");
    }
    const Expr& query = *positional[1];
    if (query.kind != ExprKind::Literal || query.literal.type() != ValueType::Text) {
      throw Error(ErrorCode::BindingError, "match_bm25 query must be a string literal");
    }
    FtsInfo fts;
    fts.id = bind(*positional[0], st, clause);
    fts.query = query.literal.as_text();
    if (!e.qualifier.empty()) {
      fts.table = e.qualifier.substr(std::string("fts_main_").size());
    } else if (fts.id.kind == BoundExpr::Kind::Column) {
      fts.table = st.cur->schema[fts.id.column].source_table;
    }
    if (fts.table.empty()) {
      throw Error(ErrorCode::BindingError, "cannot tell which table's index match_bm25 should use; qualify it as fts_main_<table>.match_bm25");
    }
    auto index = env_.fts_index ? env_.fts_index(fts.table) : std::nullopt;
    if (!index) {
      throw Error(ErrorCode::BindingError, "table '" + fts.table + "' has no full-text index (CREATE FTS INDEX ON " + fts.table + "(id, text))");
    }
    if (fields && *fields != index->second) {
      throw Error(ErrorCode::BindingError, "the index on '" + fts.table + "' covers column '" + index->second + "', not '" + *fields + "'");
    }
    auto node = stack(st, PlanKind::FtsMatch);
    node->detail = to_sql(e);
    node->fts = std::move(fts);
    const std::string key = to_sql(e);
    std::size_t col = node->schema.size();
    node->schema.push_back({{}, key, true, {}});
    st.memo[key] = col;
    return col;
  }

  const Catalog& catalog_;
  const BindEnvironment& env_;
  int next_id_ = 0;
};

}  // namespace

LogicalPlan bind_and_plan(const SelectStmt& stmt, const Catalog& catalog, const BindEnvironment& env) {
  return Planner(catalog, env).run(stmt);
}

}  // namespace flockmtl::sql
