#include "mpc/report.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

namespace mpc {

std::string percent1(double fraction) {
  double pct = std::round(fraction * 1000.0) / 10.0;
  if (pct == 0.0) pct = 0.0;  // no "-0.0"
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.1f", pct);
  return buf;
}

nlohmann::json verdict_report(const PipelineResult& result, const ModelConfig& cfg) {
  using nlohmann::json;
  const auto& outcome = result.outcome;
  json chains = json::array();
  for (const auto& c : outcome.chains) {
    chains.push_back({{"root", c.root_rcs_id}, {"path", c.path()}, {"terminal_reason", to_string(c.terminal_reason)}});
  }
  json clusters = json::array();
  for (const auto& c : outcome.clusters) clusters.push_back(c);
  return json{
      {"metadata",
       {{"n_orders", result.n_orders},
        {"n_segments", result.n_segments},
        {"n_segments_excluded", result.exclusions.size()},
        {"n_groups", result.groups.size()},
        {"n_fcs", result.all_fcs.size()},
        {"n_estimated", outcome.verdicts.size()},
        {"n_rcs", outcome.rcs_ids.size()},
        {"n_clusters", outcome.clusters.size()},
        {"n_chains", outcome.chains.size()},
        {"n_unscored_evs", result.unscored_evs.size()},
        {"rcs_bias_model", "standard deviation of the mean of n truncated normals, half-width l/2"},
        {"rcs_reference_bped", "cluster mean BPED stands in for the true BPED"}}},
      {"config", cfg},
      {"warnings", result.warnings},
      {"verdicts", outcome.verdicts},
      {"clusters", clusters},
      {"chains", chains},
      {"unestimated", result.unestimated},
  };
}

void write_verdicts_csv(std::ostream& out, const std::vector<FcsVerdict>& verdicts) {
  out << "fcs_id,gamma_pct,sigma_pct,p_acceptable_pct,classification,provenance\n";
  for (const auto& v : verdicts) {
    out << v.fcs_id << ',' << percent1(v.gamma) << ',' << percent1(v.sigma_gamma) << ','
        << percent1(v.p_acceptable / 100.0) << ',' << to_string(v.classification) << ','
        << to_string(v.provenance.kind) << '\n';
  }
}

}  // namespace mpc
