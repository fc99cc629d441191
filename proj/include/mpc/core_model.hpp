#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace mpc {

using FcsId = std::string;
using EvId = std::string;

// Error taxonomy. Data errors quarantine one record; schema errors abort a run;
// invariant errors indicate a bug and map to CLI exit code 3.
struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct SchemaError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct InvariantError : std::logic_error {
  using std::logic_error::logic_error;
};

struct ChargingPoint {
  std::int64_t timestamp = 0;  // seconds since the Unix epoch, UTC
  double energy_kwh = 0.0;     // cumulative meter reading of the station
  int soc_pct = 0;             // BMS-reported state of charge, 1 % resolution
  double current_a = 0.0;
  double voltage_v = 0.0;
  double temp_c = 0.0;
};

struct ChargingOrder {
  std::string order_id;
  EvId ev_id;
  FcsId fcs_id;
  std::string battery_type;  // empty when the input carries no battery type
  std::vector<ChargingPoint> points;
};

/// One sample of a segment, relative to the segment's first point.
struct SegmentPoint {
  int delta_soc_pct = 0;
  double delta_energy_kwh = 0.0;
};

/// Constant-current slice of a charging order.
struct ChargingSegment {
  EvId ev_id;
  FcsId fcs_id;
  std::string order_id;
  int segment_index = 0;
  std::size_t first_point = 0;  // index into the order's points
  std::size_t last_point = 0;
  std::int64_t order_start = 0;
  std::string battery_type;
  double delta_energy_kwh = 0.0;
  int delta_soc_pct = 0;
  int start_soc_pct = 0;
  int end_soc_pct = 0;
  double mean_current_a = 0.0;
  double peak_to_peak_current_a = 0.0;
  double mean_temp_c = 0.0;
  double mean_voltage_v = 0.0;
  std::vector<SegmentPoint> point_series;  // excludes the (0, 0) origin

  std::string key() const { return order_id + ":" + std::to_string(segment_index); }
};

/// Feasible BPED interval and the matching quantization-error interval.
struct QuantBounds {
  double e_d_min = 0.0;
  double e_d_max = 0.0;
  double y_min = 0.0;
  double y_max = 0.0;
  int y0 = 0;  // reported SOC change of the segment
};

/// Expected battery-pack energy density of a segment (or a pool of segments)
/// and its uncertainty budget.
struct BpedEstimate {
  double expected_e_d = 0.0;     // kWh per percent point, efficiency corrected
  double expected_e_d_sq = 0.0;  // second moment of the uncorrected BPED
  double sigma_quant = 0.0;      // SOC quantization component
  double sigma_repeat = 0.0;     // BPED repeatability component
  double sigma_cv = 0.0;         // relative conversion-efficiency uncertainty
  double sigma_total = 0.0;
  std::string segment_ref;
};

struct RcsCluster {
  EvId ev_id;
  std::vector<FcsId> fcs_ids;
  std::map<FcsId, BpedEstimate> per_fcs_bped;
  double e_d_true_est = 0.0;
  double sigma_e_d_true = 0.0;
  double sigma_bias = 0.0;
  double max_pair_rel_error = 0.0;
};

enum class Classification { Acceptable, Unacceptable, Unreliable };
enum class ProvenanceKind { RcsDirect, Chain };

struct Provenance {
  ProvenanceKind kind = ProvenanceKind::RcsDirect;
  // RCS-direct: the EVs whose clusters fixed the station.
  // Chain: one "A>B>C" path per contributing chain.
  std::vector<std::string> sources;
};

struct FcsVerdict {
  FcsId fcs_id;
  double gamma = 0.0;
  double sigma_gamma = 0.0;
  std::array<double, 2> interval{0.0, 0.0};
  double p_acceptable = 0.0;  // percent, rounded to one decimal
  Classification classification = Classification::Unreliable;
  Provenance provenance;
};

/// Estimation parameters. Defaults are the reference configuration.
struct ModelConfig {
  double current_pp_threshold_a = 4.0;
  int min_delta_soc_pct = 20;
  double bped_rel_repeat = 0.06;
  int min_rcs_fcs_count = 3;
  double expected_bped_stability_threshold = 0.01;
  double fcs_error_sigma = 0.0162;
  double rcs_rel_error_threshold_l = 0.0067;
  int max_chain_len_fcs = 4;
  double d_temperature_threshold_c = 5.0;
  double acceptable_gamma_t = 0.02;
  std::array<double, 2> temp_window_c{20.0, 40.0};
  double max_timespan_days = 60.0;
  double sigma_r_cv = 0.002;
  double eta_fixed = 1.0;
  double d_current_threshold_a = 4.0;
  // Off only for synthetic data whose SOC readings are exact.
  bool soc_quantization_model = true;

  /// Throws SchemaError on a non-positive threshold or an inverted window.
  void validate() const;
};

/// Naive BPED: charging energy per percent point of SOC.
double compute_bped_naive(double energy_kwh, double delta_soc_pct);

/// Relative EEM error of station B with respect to station A from their BPEDs.
double relative_eem_error(double e_d_b, double e_d_a);

/// Error of station B given the relative error B->A and the error of A.
double chain_error(double gamma_rel_b_to_a, double e_d_b, double e_d_a, double gamma_a);

std::string to_string(Classification c);
Classification classification_from_string(const std::string& s);
std::string to_string(ProvenanceKind k);
ProvenanceKind provenance_kind_from_string(const std::string& s);

void to_json(nlohmann::json& j, const ChargingPoint& v);
void from_json(const nlohmann::json& j, ChargingPoint& v);
void to_json(nlohmann::json& j, const ChargingOrder& v);
void from_json(const nlohmann::json& j, ChargingOrder& v);
void to_json(nlohmann::json& j, const SegmentPoint& v);
void from_json(const nlohmann::json& j, SegmentPoint& v);
void to_json(nlohmann::json& j, const ChargingSegment& v);
void from_json(const nlohmann::json& j, ChargingSegment& v);
void to_json(nlohmann::json& j, const QuantBounds& v);
void from_json(const nlohmann::json& j, QuantBounds& v);
void to_json(nlohmann::json& j, const BpedEstimate& v);
void from_json(const nlohmann::json& j, BpedEstimate& v);
void to_json(nlohmann::json& j, const RcsCluster& v);
void from_json(const nlohmann::json& j, RcsCluster& v);
void to_json(nlohmann::json& j, const Provenance& v);
void from_json(const nlohmann::json& j, Provenance& v);
void to_json(nlohmann::json& j, const FcsVerdict& v);
void from_json(const nlohmann::json& j, FcsVerdict& v);
void to_json(nlohmann::json& j, const ModelConfig& v);
void from_json(const nlohmann::json& j, ModelConfig& v);

}  // namespace mpc
