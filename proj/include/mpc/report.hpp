#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "mpc/pipeline.hpp"

namespace mpc {

/// Fraction as a percentage with one decimal, e.g. -0.017 -> "-1.7".
std::string percent1(double fraction);

/// Verdict report: metadata, configuration, warnings, verdicts, reference
/// clusters, chains and unestimated stations.
nlohmann::json verdict_report(const PipelineResult& result, const ModelConfig& cfg);

/// `fcs_id,gamma_pct,sigma_pct,p_acceptable_pct,classification,provenance`
void write_verdicts_csv(std::ostream& out, const std::vector<FcsVerdict>& verdicts);

}  // namespace mpc
