#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "mpc/core_model.hpp"
#include "mpc/estimator.hpp"

namespace mpc {

struct SimFcs {
  FcsId fcs_id;
  double gamma_true = 0.0;
  double cable_resistance_ohm = 0.0023;
  int level = 0;  // anchored topology: 0 for anchors, hops from an anchor otherwise
};

struct SwapEvent {
  double day = 0.0;
  double new_e_d_true = 0.0;
};

struct SimEv {
  EvId ev_id;
  double e_d_true = 0.0;  // kWh per percent point at the battery terminals
  double rel_repeat_sigma = 0.05;
  double rated_capacity_kwh = 0.0;
  double soh = 1.0;
  std::string battery_type = "NMC";
  std::optional<SwapEvent> swap_event;
  double pack_voltage_v = 400.0;
  double base_current_a = 150.0;
  double base_temp_c = 25.0;
  std::vector<std::size_t> home_fcs;  // indices into the station list

  double e_d_at(double day) const {
    return swap_event && day >= swap_event->day ? swap_event->new_e_d_true : e_d_true;
  }
};

struct SimScenario {
  int n_fcs = 500;
  int n_ev = 1200;
  int n_orders = 7000;
  std::uint64_t seed = 1;
  double sampling_interval_s = 60.0;
  double soc_start_min = 10.0;
  double soc_start_max = 40.0;
  double soc_end_min = 70.0;
  double soc_end_max = 95.0;
  double capacity_min_kwh = 40.0;
  double capacity_max_kwh = 80.0;
  double soh_min = 0.85;
  double soh_max = 1.0;
  double pack_voltage_min_v = 350.0;
  double pack_voltage_max_v = 420.0;
  double c_rate_min = 0.8;
  double c_rate_max = 1.5;
  double current_session_sigma_a = 0.7;
  double current_noise_a = 0.3;
  double current_step_fraction = 0.2;
  double current_step_a = 15.0;
  double temp_base_min_c = 24.0;
  double temp_base_max_c = 34.0;
  double temp_session_sigma_c = 1.0;
  double temp_out_of_band_fraction = 0.05;
  // Repeatability of the per-percent-point BPED; a session of dS points
  // realizes e_d_true * (1 + N(0, rel_repeat_sigma^2 / dS)).
  double rel_repeat_sigma = 0.05;
  double fcs_error_sigma = 0.0162;
  double fraction_defective = 0.15;
  double gamma_t = 0.02;
  double cable_resistance_ohm = 0.0023;
  int home_min = 3;
  int home_max = 6;
  int home_spread = 12;
  double days = 30.0;
  double swap_fraction = 0.01;
  double swap_jump = 0.10;
  double lifepo4_fraction = 0.0;
  // Off: SOC is read exactly at integer crossings instead of floored on a clock.
  bool soc_quantization = true;
  std::string topology = "ring";  // ring | anchored
  std::string gamma_mode = "drawn";  // drawn | zero
  int anchor_count = 8;

  /// Throws SchemaError on an unusable combination.
  void validate() const;
};

/// Constant-current stretch of a simulated session.
struct SimLevel {
  double current_a = 0.0;
  double eta = 1.0;
  double soc_from = 0.0;
  double soc_to = 0.0;
  double e_d_reported = 0.0;  // station energy per true percent point
  double battery_energy_kwh = 0.0;
  double reported_energy_kwh = 0.0;
};

struct SessionTruth {
  std::string order_id;
  EvId ev_id;
  FcsId fcs_id;
  double gamma_true = 0.0;
  double e_d_session = 0.0;  // realized battery-side BPED
  double soc_start = 0.0;
  double soc_end = 0.0;
  std::vector<SimLevel> levels;
};

struct SimDataset {
  SimScenario scenario;
  std::vector<SimFcs> stations;
  std::vector<SimEv> evs;
  std::vector<ChargingOrder> orders;
  std::vector<SessionTruth> truth;  // parallel to orders
};

/// Fraction of metered energy that reaches the battery through the cable.
double conversion_efficiency(double u_v, double i_a, double r_ohm);

/// One charging session. Reported SOC is the floor of the true SOC sampled on
/// the scenario clock, or the exact value at integer crossings when
/// quantization is off.
ChargingOrder simulate_session(const SimEv& ev, const SimFcs& fcs, const SimScenario& scenario,
                               std::mt19937_64& rng, const std::string& order_id,
                               std::int64_t start_ts, SessionTruth* truth = nullptr);

/// Independent stream for one order; identical for any worker count.
std::mt19937_64 order_stream(std::uint64_t seed, std::uint64_t order_index);

SimDataset generate_dataset(const SimScenario& scenario, int workers = 1);

std::map<FcsId, double> ground_truth(const std::vector<SimFcs>& stations);
void write_ground_truth_csv(std::ostream& out, const std::vector<SimFcs>& stations);
/// Reads `fcs_id,gamma_true`; throws SchemaError on a bad header or row.
std::map<FcsId, double> read_ground_truth_csv(const std::filesystem::path& path);

struct ConfusionCounts {
  int acceptable_as_acceptable = 0;
  int acceptable_as_unacceptable = 0;
  int unacceptable_as_acceptable = 0;
  int unacceptable_as_unacceptable = 0;
};

struct ValidationReport {
  int n_fcs = 0;
  int n_estimated = 0;
  int n_valid = 0;  // estimated and not Unreliable
  int n_correct = 0;
  int n_unreliable = 0;
  double accuracy = 0.0;
  double accuracy_rcs = 0.0;
  double accuracy_chain = 0.0;
  double coverage = 0.0;
  double max_abs_error = 0.0;
  ConfusionCounts confusion;
  int n_rcs = 0;
  int n_clusters = 0;
  int n_chains = 0;
  bool insufficient_data = false;
};

/// Scores verdicts against true station errors.
ValidationReport score_verdicts(const std::vector<FcsVerdict>& verdicts,
                                const std::map<FcsId, double>& truth, const EstimationOutcome& outcome,
                                double gamma_t);

/// Generates the scenario, runs the full pipeline and scores it.
ValidationReport run_validation(const SimScenario& scenario, const ModelConfig& cfg, int workers = 1);

void to_json(nlohmann::json& j, const ValidationReport& v);
void to_json(nlohmann::json& j, const SimScenario& v);

}  // namespace mpc
