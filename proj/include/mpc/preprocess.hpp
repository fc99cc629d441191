#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "mpc/core_model.hpp"

namespace mpc {

namespace reason {
inline constexpr const char* kTempLow = "temp_below_window";
inline constexpr const char* kTempHigh = "temp_above_window";
inline constexpr const char* kDeltaSoc = "delta_soc_below_min";
inline constexpr const char* kTimespan = "outside_timespan";
inline constexpr const char* kLiFePO4 = "battery_lifepo4";
inline constexpr const char* kInfeasibleBounds = "quant_bounds_infeasible";
inline constexpr const char* kUnstableEv = "unstable_ev";
}  // namespace reason

struct Exclusion {
  std::string segment_key;
  std::string reason;
};

struct FilterResult {
  std::vector<ChargingSegment> kept;
  std::vector<Exclusion> excluded;
  std::vector<EvId> unscored_evs;  // only filled by screen_unstable_evs
};

/// Temperature window, minimum SOC change, LiFePO4 exclusion and the time-span
/// cap anchored at the earliest retained order.
FilterResult filter_segments(const std::vector<ChargingSegment>& segments, const ModelConfig& cfg);

/// Drops segments whose SOC/energy inequality system has no solution.
FilterResult drop_infeasible_segments(const std::vector<ChargingSegment>& segments,
                                      const ModelConfig& cfg);

/// Relative repeatability (sample standard deviation over mean) of the
/// expected BPEDs of segments from one EV at one station. Needs n >= 2.
double ev_stability(std::span<const ChargingSegment> same_ev_same_fcs, const ModelConfig& cfg);

/// Drops every segment of an EV whose stability at any station exceeds the
/// configured threshold. EVs without a repeated (EV, station) pair are kept and
/// reported as unscored.
FilterResult screen_unstable_evs(const std::vector<ChargingSegment>& pool, const ModelConfig& cfg);

bool is_lifepo4(const std::string& battery_type);

void write_exclusions_csv(std::ostream& out, const std::vector<Exclusion>& excluded);

}  // namespace mpc
