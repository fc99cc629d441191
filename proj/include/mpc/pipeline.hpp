#pragma once

#include <string>
#include <vector>

#include "mpc/core_model.hpp"
#include "mpc/estimator.hpp"
#include "mpc/ingestion.hpp"
#include "mpc/preprocess.hpp"

namespace mpc {

struct PipelineResult {
  std::vector<FcsId> all_fcs;  // every station seen in the input, sorted
  std::vector<FcsId> unestimated;
  std::size_t n_orders = 0;
  std::size_t n_segments = 0;
  std::vector<Exclusion> exclusions;
  std::vector<EvId> unscored_evs;
  std::vector<SegmentGroup> groups;
  EstimationOutcome outcome;
  std::vector<std::string> warnings;
};

/// Segmentation, filtering, per-segment BPED and estimation over parsed orders.
PipelineResult run_pipeline(const std::vector<ChargingOrder>& orders, const ModelConfig& cfg,
                            int workers = 1);

}  // namespace mpc
