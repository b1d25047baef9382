#pragma once

#include <cstdint>
#include <map>
#include <string>

#include <json.hpp>

#include "iflab/catalog.hpp"
#include "iflab/derive.hpp"
#include "iflab/estimate.hpp"
#include "iflab/eval.hpp"
#include "iflab/study.hpp"

namespace iflab {

// All report documents use insertion-ordered JSON with a fixed key order,
// so identical inputs serialize byte-identically. Non-finite numbers
// (failed replications, absent intervals) serialize as null.
using Json = nlohmann::ordered_json;

// Schema as an ordered JSON object {"x":2,"a":2,"y":2}; variable order is
// the document order.
Json schema_to_json(const Schema& schema);
Schema schema_from_json(const Json& j);

// Derivation report: the input functional, the derived influence function,
// and the replayable rewrite trace (steps[i].after == steps[i+1].before).
Json trace_to_json(const std::string& input, const std::string& influence,
                   const DerivationTrace& trace);

// Symbolic-vs-oracle check report with per-atom rows.
Json check_to_json(const CheckReport& report);

// Single-estimate report. `seed` and `K` echo the run settings; `learners`
// maps manifest names to the learner spellings (empty for exact bundles).
Json estimate_to_json(const Estimate& est, std::uint64_t seed, int K,
                      const std::map<std::string, std::string>& learners);

Json study_config_to_json(const StudyConfig& config);

// Inverse of study_config_to_json. Unknown keys are rejected (BadConfig),
// absent optional keys take the StudyConfig defaults.
StudyConfig study_config_from_json(const Json& j);

Json study_result_to_json(const StudyResult& result);

Json dr_to_json(const DrComparison& cmp);

Json scaling_to_json(const ScalingRecord& rec);

// Catalog listing: functionals with manifests and DSL forms, registered
// data-generating processes, and the learner grammar.
Json list_to_json();

// Raw per-replication table (one row per record, doubles at full
// round-trip precision) for external plotting.
std::string records_csv(const StudyResult& result);

}  // namespace iflab
