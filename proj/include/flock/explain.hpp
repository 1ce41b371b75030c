#pragma once

#include <string>

#include "flock/executor.hpp"

namespace flockmtl {

/// Annotated plan tree as JSON. Runtime fields appear only when `result` is given.
Json export_plan(const LogicalPlan& plan, const QueryResult* result, const ExecOverrides& overrides,
                 const std::string& sql);

/// Indented one-line-per-node rendering for terminals.
std::string explain_text(const LogicalPlan& plan, const QueryResult* result = nullptr);

}  // namespace flockmtl
