#include "mpc/preprocess.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <map>
#include <ostream>
#include <set>

#include "mpc/soc_quant.hpp"

namespace mpc {
namespace {

const char* static_reason(const ChargingSegment& s, const ModelConfig& cfg) {
  if (s.mean_temp_c < cfg.temp_window_c[0]) return reason::kTempLow;
  if (s.mean_temp_c > cfg.temp_window_c[1]) return reason::kTempHigh;
  if (s.delta_soc_pct < cfg.min_delta_soc_pct) return reason::kDeltaSoc;
  if (is_lifepo4(s.battery_type)) return reason::kLiFePO4;
  return nullptr;
}

}  // namespace

bool is_lifepo4(const std::string& battery_type) {
  std::string t;
  for (char c : battery_type) t.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  return t == "lifepo4" || t == "lfp";
}

FilterResult filter_segments(const std::vector<ChargingSegment>& segments, const ModelConfig& cfg) {
  FilterResult out;
  std::int64_t anchor = std::numeric_limits<std::int64_t>::max();
  for (const auto& s : segments) {
    if (!static_reason(s, cfg)) anchor = std::min(anchor, s.order_start);
  }
  const auto span_s = static_cast<std::int64_t>(std::llround(cfg.max_timespan_days * 86400.0));
  for (const auto& s : segments) {
    if (const char* r = static_reason(s, cfg)) {
      out.excluded.push_back({s.key(), r});
    } else if (s.order_start - anchor > span_s) {
      out.excluded.push_back({s.key(), reason::kTimespan});
    } else {
      out.kept.push_back(s);
    }
  }
  return out;
}

FilterResult drop_infeasible_segments(const std::vector<ChargingSegment>& segments,
                                      const ModelConfig& cfg) {
  FilterResult out;
  for (const auto& s : segments) {
    if (cfg.soc_quantization_model) {
      try {
        (void)quant_bounds(s);
      } catch (const DataError&) {
        out.excluded.push_back({s.key(), reason::kInfeasibleBounds});
        continue;
      }
    }
    out.kept.push_back(s);
  }
  return out;
}

double ev_stability(std::span<const ChargingSegment> same_ev_same_fcs, const ModelConfig& cfg) {
  const auto n = same_ev_same_fcs.size();
  if (n < 2) throw DomainError("stability needs at least two segments");
  std::vector<double> e_d;
  e_d.reserve(n);
  for (const auto& s : same_ev_same_fcs) {
    if (s.ev_id != same_ev_same_fcs[0].ev_id || s.fcs_id != same_ev_same_fcs[0].fcs_id) {
      throw DomainError("stability segments must share EV and station");
    }
    e_d.push_back(estimate_segment_bped(s, cfg).expected_e_d);
  }
  double mean = 0.0;
  for (double v : e_d) mean += v;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double v : e_d) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(n - 1)) / mean;
}

FilterResult screen_unstable_evs(const std::vector<ChargingSegment>& pool, const ModelConfig& cfg) {
  std::map<EvId, std::map<FcsId, std::vector<ChargingSegment>>> by_ev;
  for (const auto& s : pool) by_ev[s.ev_id][s.fcs_id].push_back(s);

  std::set<EvId> unstable;
  FilterResult out;
  for (const auto& [ev, stations] : by_ev) {
    bool scored = false;
    for (const auto& [fcs, segs] : stations) {
      if (segs.size() < 2) continue;
      scored = true;
      if (ev_stability(segs, cfg) > cfg.expected_bped_stability_threshold) {
        unstable.insert(ev);
        break;
      }
    }
    if (!scored) out.unscored_evs.push_back(ev);
  }
  for (const auto& s : pool) {
    if (unstable.count(s.ev_id)) out.excluded.push_back({s.key(), reason::kUnstableEv});
    else out.kept.push_back(s);
  }
  return out;
}

void write_exclusions_csv(std::ostream& out, const std::vector<Exclusion>& excluded) {
  out << "segment_key,reason\n";
  for (const auto& e : excluded) out << e.segment_key << ',' << e.reason << '\n';
}

}  // namespace mpc
