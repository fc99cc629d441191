#include "mpc/pipeline.hpp"

#include <algorithm>
#include <set>

#include "mpc/parallel.hpp"

namespace mpc {

PipelineResult run_pipeline(const std::vector<ChargingOrder>& orders, const ModelConfig& cfg,
                            int workers) {
  cfg.validate();
  PipelineResult out;
  out.n_orders = orders.size();

  std::vector<std::vector<ChargingSegment>> per_order(orders.size());
  parallel_for(orders.size(), workers, [&](std::size_t i) {
    per_order[i] = segment_order(orders[i], cfg.current_pp_threshold_a);
  });
  std::vector<ChargingSegment> segments;
  for (auto& segs : per_order) {
    for (auto& s : segs) segments.push_back(std::move(s));
  }
  out.n_segments = segments.size();

  std::set<FcsId> stations;
  for (const auto& o : orders) stations.insert(o.fcs_id);
  out.all_fcs.assign(stations.begin(), stations.end());

  auto filtered = filter_segments(segments, cfg);
  auto feasible = drop_infeasible_segments(filtered.kept, cfg);
  auto stable = screen_unstable_evs(feasible.kept, cfg);
  for (auto* part : {&filtered.excluded, &feasible.excluded, &stable.excluded}) {
    out.exclusions.insert(out.exclusions.end(), part->begin(), part->end());
  }
  out.unscored_evs = std::move(stable.unscored_evs);

  out.groups = build_segment_groups(stable.kept, cfg);
  out.outcome = estimate_errors(out.groups, cfg);

  std::set<FcsId> estimated;
  for (const auto& v : out.outcome.verdicts) estimated.insert(v.fcs_id);
  for (const auto& f : out.all_fcs) {
    if (!estimated.count(f)) out.unestimated.push_back(f);
  }
  if (out.outcome.rcs_ids.empty()) {
    out.warnings.push_back("no reference charging station found; no station could be estimated");
  }
  return out;
}

}  // namespace mpc
