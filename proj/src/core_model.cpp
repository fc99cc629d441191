#include "mpc/core_model.hpp"

#include <cmath>

namespace mpc {

using nlohmann::json;

void ModelConfig::validate() const {
  auto require_positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw SchemaError(std::string("config: ") + name + " must be positive");
    }
  };
  require_positive(current_pp_threshold_a, "current_pp_threshold_a");
  require_positive(min_delta_soc_pct, "min_delta_soc_pct");
  require_positive(bped_rel_repeat, "bped_rel_repeat");
  require_positive(min_rcs_fcs_count, "min_rcs_fcs_count");
  require_positive(expected_bped_stability_threshold, "expected_bped_stability_threshold");
  require_positive(fcs_error_sigma, "fcs_error_sigma");
  require_positive(rcs_rel_error_threshold_l, "rcs_rel_error_threshold_l");
  require_positive(max_chain_len_fcs, "max_chain_len_fcs");
  require_positive(d_temperature_threshold_c, "d_temperature_threshold_c");
  require_positive(acceptable_gamma_t, "acceptable_gamma_t");
  require_positive(max_timespan_days, "max_timespan_days");
  require_positive(sigma_r_cv, "sigma_r_cv");
  require_positive(eta_fixed, "eta_fixed");
  require_positive(d_current_threshold_a, "d_current_threshold_a");
  if (!(temp_window_c[0] < temp_window_c[1])) {
    throw SchemaError("config: temp_window_c low bound must be below high bound");
  }
}

double compute_bped_naive(double energy_kwh, double delta_soc_pct) {
  if (!(delta_soc_pct > 0.0)) throw DomainError("BPED needs a positive SOC change");
  if (!(energy_kwh > 0.0)) throw DomainError("BPED needs a positive charging energy");
  return energy_kwh / delta_soc_pct;
}

double relative_eem_error(double e_d_b, double e_d_a) {
  if (!(e_d_a > 0.0)) throw DomainError("reference BPED must be positive");
  return (e_d_b - e_d_a) / e_d_a;
}

double chain_error(double gamma_rel_b_to_a, double e_d_b, double e_d_a, double gamma_a) {
  if (!(e_d_a > 0.0)) throw DomainError("reference BPED must be positive");
  return gamma_rel_b_to_a + (e_d_b / e_d_a) * gamma_a;
}

std::string to_string(Classification c) {
  switch (c) {
    case Classification::Acceptable: return "Acceptable";
    case Classification::Unacceptable: return "Unacceptable";
    case Classification::Unreliable: return "Unreliable";
  }
  throw InvariantError("unknown classification");
}

Classification classification_from_string(const std::string& s) {
  if (s == "Acceptable") return Classification::Acceptable;
  if (s == "Unacceptable") return Classification::Unacceptable;
  if (s == "Unreliable") return Classification::Unreliable;
  throw SchemaError("unknown classification '" + s + "'");
}

std::string to_string(ProvenanceKind k) {
  return k == ProvenanceKind::RcsDirect ? "RCS-direct" : "chain";
}

ProvenanceKind provenance_kind_from_string(const std::string& s) {
  if (s == "RCS-direct") return ProvenanceKind::RcsDirect;
  if (s == "chain") return ProvenanceKind::Chain;
  throw SchemaError("unknown provenance '" + s + "'");
}

void to_json(json& j, const ChargingPoint& v) {
  j = json{{"timestamp", v.timestamp}, {"energy_kwh", v.energy_kwh}, {"soc_pct", v.soc_pct},
           {"current_a", v.current_a}, {"voltage_v", v.voltage_v}, {"temp_c", v.temp_c}};
}

void from_json(const json& j, ChargingPoint& v) {
  j.at("timestamp").get_to(v.timestamp);
  j.at("energy_kwh").get_to(v.energy_kwh);
  j.at("soc_pct").get_to(v.soc_pct);
  j.at("current_a").get_to(v.current_a);
  j.at("voltage_v").get_to(v.voltage_v);
  j.at("temp_c").get_to(v.temp_c);
}

void to_json(json& j, const ChargingOrder& v) {
  j = json{{"order_id", v.order_id}, {"ev_id", v.ev_id},     {"fcs_id", v.fcs_id},
           {"battery_type", v.battery_type}, {"points", v.points}};
}

void from_json(const json& j, ChargingOrder& v) {
  j.at("order_id").get_to(v.order_id);
  j.at("ev_id").get_to(v.ev_id);
  j.at("fcs_id").get_to(v.fcs_id);
  j.at("battery_type").get_to(v.battery_type);
  j.at("points").get_to(v.points);
}

void to_json(json& j, const SegmentPoint& v) {
  j = json::array({v.delta_soc_pct, v.delta_energy_kwh});
}

void from_json(const json& j, SegmentPoint& v) {
  j.at(0).get_to(v.delta_soc_pct);
  j.at(1).get_to(v.delta_energy_kwh);
}

void to_json(json& j, const ChargingSegment& v) {
  j = json{{"ev_id", v.ev_id},
           {"fcs_id", v.fcs_id},
           {"order_id", v.order_id},
           {"segment_index", v.segment_index},
           {"first_point", v.first_point},
           {"last_point", v.last_point},
           {"order_start", v.order_start},
           {"battery_type", v.battery_type},
           {"delta_energy_kwh", v.delta_energy_kwh},
           {"delta_soc_pct", v.delta_soc_pct},
           {"start_soc_pct", v.start_soc_pct},
           {"end_soc_pct", v.end_soc_pct},
           {"mean_current_a", v.mean_current_a},
           {"peak_to_peak_current_a", v.peak_to_peak_current_a},
           {"mean_temp_c", v.mean_temp_c},
           {"mean_voltage_v", v.mean_voltage_v},
           {"point_series", v.point_series}};
}

void from_json(const json& j, ChargingSegment& v) {
  j.at("ev_id").get_to(v.ev_id);
  j.at("fcs_id").get_to(v.fcs_id);
  j.at("order_id").get_to(v.order_id);
  j.at("segment_index").get_to(v.segment_index);
  j.at("first_point").get_to(v.first_point);
  j.at("last_point").get_to(v.last_point);
  j.at("order_start").get_to(v.order_start);
  j.at("battery_type").get_to(v.battery_type);
  j.at("delta_energy_kwh").get_to(v.delta_energy_kwh);
  j.at("delta_soc_pct").get_to(v.delta_soc_pct);
  j.at("start_soc_pct").get_to(v.start_soc_pct);
  j.at("end_soc_pct").get_to(v.end_soc_pct);
  j.at("mean_current_a").get_to(v.mean_current_a);
  j.at("peak_to_peak_current_a").get_to(v.peak_to_peak_current_a);
  j.at("mean_temp_c").get_to(v.mean_temp_c);
  j.at("mean_voltage_v").get_to(v.mean_voltage_v);
  j.at("point_series").get_to(v.point_series);
}

void to_json(json& j, const QuantBounds& v) {
  j = json{{"e_d_min", v.e_d_min}, {"e_d_max", v.e_d_max}, {"y_min", v.y_min},
           {"y_max", v.y_max},     {"y0", v.y0}};
}

void from_json(const json& j, QuantBounds& v) {
  j.at("e_d_min").get_to(v.e_d_min);
  j.at("e_d_max").get_to(v.e_d_max);
  j.at("y_min").get_to(v.y_min);
  j.at("y_max").get_to(v.y_max);
  j.at("y0").get_to(v.y0);
}

void to_json(json& j, const BpedEstimate& v) {
  j = json{{"expected_e_d", v.expected_e_d}, {"expected_e_d_sq", v.expected_e_d_sq},
           {"sigma_quant", v.sigma_quant},   {"sigma_repeat", v.sigma_repeat},
           {"sigma_cv", v.sigma_cv},         {"sigma_total", v.sigma_total},
           {"segment_ref", v.segment_ref}};
}

void from_json(const json& j, BpedEstimate& v) {
  j.at("expected_e_d").get_to(v.expected_e_d);
  j.at("expected_e_d_sq").get_to(v.expected_e_d_sq);
  j.at("sigma_quant").get_to(v.sigma_quant);
  j.at("sigma_repeat").get_to(v.sigma_repeat);
  j.at("sigma_cv").get_to(v.sigma_cv);
  j.at("sigma_total").get_to(v.sigma_total);
  j.at("segment_ref").get_to(v.segment_ref);
}

void to_json(json& j, const RcsCluster& v) {
  j = json{{"ev_id", v.ev_id},
           {"fcs_ids", v.fcs_ids},
           {"per_fcs_bped", v.per_fcs_bped},
           {"e_d_true_est", v.e_d_true_est},
           {"sigma_e_d_true", v.sigma_e_d_true},
           {"sigma_bias", v.sigma_bias},
           {"max_pair_rel_error", v.max_pair_rel_error}};
}

void from_json(const json& j, RcsCluster& v) {
  j.at("ev_id").get_to(v.ev_id);
  j.at("fcs_ids").get_to(v.fcs_ids);
  j.at("per_fcs_bped").get_to(v.per_fcs_bped);
  j.at("e_d_true_est").get_to(v.e_d_true_est);
  j.at("sigma_e_d_true").get_to(v.sigma_e_d_true);
  j.at("sigma_bias").get_to(v.sigma_bias);
  j.at("max_pair_rel_error").get_to(v.max_pair_rel_error);
}

void to_json(json& j, const Provenance& v) {
  j = json{{"kind", to_string(v.kind)}, {"sources", v.sources}};
}

void from_json(const json& j, Provenance& v) {
  v.kind = provenance_kind_from_string(j.at("kind").get<std::string>());
  j.at("sources").get_to(v.sources);
}

void to_json(json& j, const FcsVerdict& v) {
  j = json{{"fcs_id", v.fcs_id},
           {"gamma", v.gamma},
           {"sigma_gamma", v.sigma_gamma},
           {"interval", v.interval},
           {"p_acceptable", v.p_acceptable},
           {"classification", to_string(v.classification)},
           {"provenance", v.provenance}};
}

void from_json(const json& j, FcsVerdict& v) {
  j.at("fcs_id").get_to(v.fcs_id);
  j.at("gamma").get_to(v.gamma);
  j.at("sigma_gamma").get_to(v.sigma_gamma);
  j.at("interval").get_to(v.interval);
  j.at("p_acceptable").get_to(v.p_acceptable);
  v.classification = classification_from_string(j.at("classification").get<std::string>());
  j.at("provenance").get_to(v.provenance);
}

void to_json(json& j, const ModelConfig& v) {
  j = json{{"current_pp_threshold_a", v.current_pp_threshold_a},
           {"min_delta_soc_pct", v.min_delta_soc_pct},
           {"bped_rel_repeat", v.bped_rel_repeat},
           {"min_rcs_fcs_count", v.min_rcs_fcs_count},
           {"expected_bped_stability_threshold", v.expected_bped_stability_threshold},
           {"fcs_error_sigma", v.fcs_error_sigma},
           {"rcs_rel_error_threshold_l", v.rcs_rel_error_threshold_l},
           {"max_chain_len_fcs", v.max_chain_len_fcs},
           {"d_temperature_threshold_c", v.d_temperature_threshold_c},
           {"acceptable_gamma_t", v.acceptable_gamma_t},
           {"temp_window_c", v.temp_window_c},
           {"max_timespan_days", v.max_timespan_days},
           {"sigma_r_cv", v.sigma_r_cv},
           {"eta_fixed", v.eta_fixed},
           {"d_current_threshold_a", v.d_current_threshold_a},
           {"soc_quantization_model", v.soc_quantization_model}};
}

void from_json(const json& j, ModelConfig& v) {
  j.at("current_pp_threshold_a").get_to(v.current_pp_threshold_a);
  j.at("min_delta_soc_pct").get_to(v.min_delta_soc_pct);
  j.at("bped_rel_repeat").get_to(v.bped_rel_repeat);
  j.at("min_rcs_fcs_count").get_to(v.min_rcs_fcs_count);
  j.at("expected_bped_stability_threshold").get_to(v.expected_bped_stability_threshold);
  j.at("fcs_error_sigma").get_to(v.fcs_error_sigma);
  j.at("rcs_rel_error_threshold_l").get_to(v.rcs_rel_error_threshold_l);
  j.at("max_chain_len_fcs").get_to(v.max_chain_len_fcs);
  j.at("d_temperature_threshold_c").get_to(v.d_temperature_threshold_c);
  j.at("acceptable_gamma_t").get_to(v.acceptable_gamma_t);
  j.at("temp_window_c").get_to(v.temp_window_c);
  j.at("max_timespan_days").get_to(v.max_timespan_days);
  j.at("sigma_r_cv").get_to(v.sigma_r_cv);
  j.at("eta_fixed").get_to(v.eta_fixed);
  j.at("d_current_threshold_a").get_to(v.d_current_threshold_a);
  j.at("soc_quantization_model").get_to(v.soc_quantization_model);
}

}  // namespace mpc
