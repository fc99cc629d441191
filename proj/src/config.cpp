#include "mpc/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <istream>
#include <map>

namespace mpc {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) throw SchemaError("config: bad value for " + key + ": '" + text + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw SchemaError("config: bad value for " + key + ": '" + text + "'");
}

using Setter = std::function<void(const std::string& key, const std::string& value)>;

std::map<std::string, Setter> setters(ModelConfig& m, SimScenario& s) {
  std::map<std::string, Setter> t;
  auto real = [&t](const char* key, double& field) {
    t[key] = [&field](const std::string& k, const std::string& v) { field = parse_number<double>(k, v); };
  };
  auto integer = [&t](const char* key, int& field) {
    t[key] = [&field](const std::string& k, const std::string& v) { field = parse_number<int>(k, v); };
  };
  auto flag = [&t](const char* key, bool& field) {
    t[key] = [&field](const std::string& k, const std::string& v) { field = parse_bool(k, v); };
  };

  real("current_pp_threshold_a", m.current_pp_threshold_a);
  integer("min_delta_soc_pct", m.min_delta_soc_pct);
  real("bped_rel_repeat", m.bped_rel_repeat);
  integer("min_rcs_fcs_count", m.min_rcs_fcs_count);
  real("expected_bped_stability_threshold", m.expected_bped_stability_threshold);
  real("rcs_rel_error_threshold_l", m.rcs_rel_error_threshold_l);
  integer("max_chain_len_fcs", m.max_chain_len_fcs);
  real("d_temperature_threshold_c", m.d_temperature_threshold_c);
  real("acceptable_gamma_t", m.acceptable_gamma_t);
  real("max_timespan_days", m.max_timespan_days);
  real("sigma_r_cv", m.sigma_r_cv);
  real("eta_fixed", m.eta_fixed);
  real("d_current_threshold_a", m.d_current_threshold_a);
  flag("soc_quantization_model", m.soc_quantization_model);
  t["temp_window_c"] = [&m](const std::string& k, const std::string& v) {
    const auto comma = v.find(',');
    if (comma == std::string::npos) throw SchemaError("config: temp_window_c must be 'low,high'");
    m.temp_window_c = {parse_number<double>(k, trim(v.substr(0, comma))),
                       parse_number<double>(k, trim(v.substr(comma + 1)))};
  };
  t["fcs_error_sigma"] = [&m, &s](const std::string& k, const std::string& v) {
    m.fcs_error_sigma = s.fcs_error_sigma = parse_number<double>(k, v);
  };

  integer("n_fcs", s.n_fcs);
  integer("n_ev", s.n_ev);
  integer("n_orders", s.n_orders);
  t["seed"] = [&s](const std::string& k, const std::string& v) { s.seed = parse_number<std::uint64_t>(k, v); };
  real("sampling_interval_s", s.sampling_interval_s);
  real("soc_start_min", s.soc_start_min);
  real("soc_start_max", s.soc_start_max);
  real("soc_end_min", s.soc_end_min);
  real("soc_end_max", s.soc_end_max);
  real("capacity_min_kwh", s.capacity_min_kwh);
  real("capacity_max_kwh", s.capacity_max_kwh);
  real("soh_min", s.soh_min);
  real("soh_max", s.soh_max);
  real("pack_voltage_min_v", s.pack_voltage_min_v);
  real("pack_voltage_max_v", s.pack_voltage_max_v);
  real("c_rate_min", s.c_rate_min);
  real("c_rate_max", s.c_rate_max);
  real("current_session_sigma_a", s.current_session_sigma_a);
  real("current_noise_a", s.current_noise_a);
  real("current_step_fraction", s.current_step_fraction);
  real("current_step_a", s.current_step_a);
  real("temp_base_min_c", s.temp_base_min_c);
  real("temp_base_max_c", s.temp_base_max_c);
  real("temp_session_sigma_c", s.temp_session_sigma_c);
  real("temp_out_of_band_fraction", s.temp_out_of_band_fraction);
  real("rel_repeat_sigma", s.rel_repeat_sigma);
  real("fraction_defective", s.fraction_defective);
  real("gamma_t", s.gamma_t);
  real("cable_resistance_ohm", s.cable_resistance_ohm);
  integer("home_min", s.home_min);
  integer("home_max", s.home_max);
  integer("home_spread", s.home_spread);
  real("days", s.days);
  real("swap_fraction", s.swap_fraction);
  real("swap_jump", s.swap_jump);
  real("lifepo4_fraction", s.lifepo4_fraction);
  flag("soc_quantization", s.soc_quantization);
  t["topology"] = [&s](const std::string&, const std::string& v) { s.topology = v; };
  t["gamma_mode"] = [&s](const std::string&, const std::string& v) { s.gamma_mode = v; };
  integer("anchor_count", s.anchor_count);
  return t;
}

}  // namespace

void apply_config(std::istream& in, ModelConfig& model, SimScenario& scenario) {
  const auto table = setters(model, scenario);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw SchemaError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const auto it = table.find(key);
    if (it == table.end()) throw SchemaError("config line " + std::to_string(line_no) + ": unknown key " + key);
    it->second(key, trim(line.substr(eq + 1)));
  }
}

void load_config(const std::filesystem::path& path, ModelConfig& model, SimScenario& scenario) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot read config " + path.string());
  apply_config(in, model, scenario);
}

}  // namespace mpc
