#include "mpc/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "mpc/ingestion.hpp"
#include "mpc/parallel.hpp"
#include "mpc/pipeline.hpp"

namespace mpc {
namespace {

constexpr std::int64_t kSimEpoch = 1709251200;  // 2024-03-01T00:00:00Z

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::string padded(const char* prefix, std::size_t i, std::size_t count) {
  std::string digits = std::to_string(i);
  const std::size_t width = std::to_string(count).size();
  if (digits.size() < width) digits.insert(0, width - digits.size(), '0');
  return prefix + digits;
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

double normal(std::mt19937_64& rng, double sigma) {
  if (sigma == 0.0) return 0.0;
  return std::normal_distribution<double>(0.0, sigma)(rng);
}

double draw_gamma(std::mt19937_64& rng, const SimScenario& sc, bool defective) {
  if (defective) {
    const double mag = uniform(rng, sc.gamma_t, 2.0 * sc.gamma_t);
    return uniform(rng, 0.0, 1.0) < 0.5 ? -mag : mag;
  }
  while (true) {
    const double g = normal(rng, sc.fcs_error_sigma);
    if (std::abs(g) <= sc.gamma_t) return g;
  }
}

std::vector<SimFcs> make_stations(const SimScenario& sc, std::mt19937_64& rng) {
  const auto n = static_cast<std::size_t>(sc.n_fcs);
  std::vector<SimFcs> stations(n);
  for (std::size_t i = 0; i < n; ++i) {
    stations[i].fcs_id = padded("FCS", i + 1, n);
    stations[i].cable_resistance_ohm = sc.cable_resistance_ohm;
  }
  const bool anchored = sc.topology == "anchored";
  const std::size_t first = anchored ? static_cast<std::size_t>(sc.anchor_count) : 0;
  std::vector<std::size_t> order(n - first);
  std::iota(order.begin(), order.end(), first);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_defective = static_cast<std::size_t>(std::llround(sc.fraction_defective * static_cast<double>(order.size())));
  std::vector<bool> defective(n, false);
  for (std::size_t k = 0; k < n_defective; ++k) defective[order[k]] = true;
  for (std::size_t i = first; i < n; ++i) {
    stations[i].gamma_true = sc.gamma_mode == "zero" ? 0.0 : draw_gamma(rng, sc, defective[i]);
  }
  if (anchored) {
    for (std::size_t i = first; i < n; ++i) {
      std::vector<std::size_t> parents;
      for (std::size_t p = 0; p < i; ++p) {
        if (stations[p].level < 3) parents.push_back(p);
      }
      const auto p = parents[std::uniform_int_distribution<std::size_t>(0, parents.size() - 1)(rng)];
      stations[i].level = stations[p].level + 1;
    }
  }
  return stations;
}

SimEv make_ev(const SimScenario& sc, std::mt19937_64& rng, std::size_t index) {
  SimEv ev;
  ev.ev_id = padded("EV", index + 1, static_cast<std::size_t>(std::max(sc.n_ev, 1)));
  ev.rel_repeat_sigma = sc.rel_repeat_sigma;
  ev.rated_capacity_kwh = uniform(rng, sc.capacity_min_kwh, sc.capacity_max_kwh);
  ev.soh = uniform(rng, sc.soh_min, sc.soh_max);
  ev.e_d_true = ev.rated_capacity_kwh * ev.soh / 100.0;
  ev.pack_voltage_v = uniform(rng, sc.pack_voltage_min_v, sc.pack_voltage_max_v);
  const double capacity_ah = ev.rated_capacity_kwh * ev.soh * 1000.0 / ev.pack_voltage_v;
  ev.base_current_a = capacity_ah * uniform(rng, sc.c_rate_min, sc.c_rate_max);
  ev.base_temp_c = uniform(rng, sc.temp_base_min_c, sc.temp_base_max_c);
  if (uniform(rng, 0.0, 1.0) < sc.lifepo4_fraction) ev.battery_type = "LiFePO4";
  if (uniform(rng, 0.0, 1.0) < sc.swap_fraction) {
    ev.swap_event = SwapEvent{uniform(rng, sc.days / 6.0, sc.days * 5.0 / 6.0), ev.e_d_true * (1.0 + sc.swap_jump)};
  }
  return ev;
}

struct Visit {
  std::size_t ev;
  std::size_t fcs;
  std::int64_t start_ts;
};

std::int64_t draw_start(const SimScenario& sc, std::mt19937_64& rng) {
  return kSimEpoch + static_cast<std::int64_t>(std::floor(uniform(rng, 0.0, sc.days) * 86400.0));
}

std::vector<Visit> ring_visits(const SimScenario& sc, std::vector<SimEv>& evs, std::mt19937_64& rng) {
  const auto n = static_cast<std::size_t>(sc.n_fcs);
  for (auto& ev : evs) {
    const auto center = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
    const auto size = std::min<std::size_t>(
        n, static_cast<std::size_t>(std::uniform_int_distribution<int>(sc.home_min, sc.home_max)(rng)));
    std::vector<std::size_t> offsets(static_cast<std::size_t>(std::min<int>(sc.home_spread, sc.n_fcs)) - 1);
    std::iota(offsets.begin(), offsets.end(), 1);
    std::shuffle(offsets.begin(), offsets.end(), rng);
    ev.home_fcs = {center};
    for (std::size_t k = 0; ev.home_fcs.size() < size && k < offsets.size(); ++k) {
      ev.home_fcs.push_back((center + offsets[k]) % n);
    }
    std::sort(ev.home_fcs.begin(), ev.home_fcs.end());
  }
  std::vector<Visit> visits;
  visits.reserve(static_cast<std::size_t>(sc.n_orders));
  for (int k = 0; k < sc.n_orders; ++k) {
    const auto e = std::uniform_int_distribution<std::size_t>(0, evs.size() - 1)(rng);
    const auto& home = evs[e].home_fcs;
    const auto f = home[std::uniform_int_distribution<std::size_t>(0, home.size() - 1)(rng)];
    visits.push_back({e, f, draw_start(sc, rng)});
  }
  return visits;
}

// Anchor EVs each visit three anchors; every other station is tied to one
// station of a lower level by a link EV visiting exactly that pair.
std::vector<Visit> anchored_visits(const SimScenario& sc, const std::vector<SimFcs>& stations,
                                   std::vector<SimEv>& evs, std::mt19937_64& rng) {
  const auto anchors = static_cast<std::size_t>(sc.anchor_count);
  const std::size_t n_anchor_evs = 2 * anchors;
  evs.clear();
  std::vector<Visit> visits;
  for (std::size_t k = 0; k < n_anchor_evs; ++k) {
    evs.push_back(make_ev(sc, rng, evs.size()));
    std::vector<std::size_t> pick(anchors);
    std::iota(pick.begin(), pick.end(), 0);
    std::shuffle(pick.begin(), pick.end(), rng);
    pick.resize(3);
    std::sort(pick.begin(), pick.end());
    evs.back().home_fcs = pick;
  }
  for (std::size_t i = anchors; i < stations.size(); ++i) {
    std::vector<std::size_t> parents;
    for (std::size_t p = 0; p < i; ++p) {
      if (stations[p].level == stations[i].level - 1) parents.push_back(p);
    }
    const auto p = parents[std::uniform_int_distribution<std::size_t>(0, parents.size() - 1)(rng)];
    evs.push_back(make_ev(sc, rng, evs.size()));
    evs.back().home_fcs = {p, i};
  }
  for (std::size_t e = 0; e < evs.size(); ++e) {
    evs[e].swap_event.reset();
    for (auto f : evs[e].home_fcs) visits.push_back({e, f, draw_start(sc, rng)});
  }
  return visits;
}

}  // namespace

void SimScenario::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw SchemaError(std::string("invalid scenario: ") + what);
  };
  require(n_fcs >= 1 && n_ev >= 1 && n_orders >= 0, "counts must be positive");
  require(sampling_interval_s > 0.0, "sampling_interval_s must be positive");
  require(soc_start_min >= 0.0 && soc_start_min <= soc_start_max, "soc_start range");
  require(soc_end_min <= soc_end_max && soc_end_max <= 100.0, "soc_end range");
  require(soc_end_min - soc_start_max >= 1.0, "sessions must gain at least one percent point");
  require(capacity_min_kwh > 0.0 && capacity_min_kwh <= capacity_max_kwh, "capacity range");
  require(soh_min > 0.0 && soh_min <= soh_max && soh_max <= 1.0, "soh range");
  require(pack_voltage_min_v > 0.0 && pack_voltage_min_v <= pack_voltage_max_v, "pack voltage range");
  require(c_rate_min > 0.0 && c_rate_min <= c_rate_max, "c-rate range");
  require(current_session_sigma_a >= 0.0 && current_noise_a >= 0.0 && current_step_a >= 0.0, "current noise");
  require(temp_base_min_c <= temp_base_max_c && temp_session_sigma_c >= 0.0, "temperature range");
  for (double f : {current_step_fraction, temp_out_of_band_fraction, fraction_defective, swap_fraction,
                   lifepo4_fraction}) {
    require(f >= 0.0 && f <= 1.0, "fractions must lie in [0, 1]");
  }
  require(rel_repeat_sigma >= 0.0 && fcs_error_sigma > 0.0 && gamma_t > 0.0, "error model");
  require(cable_resistance_ohm >= 0.0, "cable resistance");
  require(home_min >= 1 && home_min <= home_max && home_spread >= home_max, "home set sizes");
  require(days > 0.0, "days must be positive");
  require(topology == "ring" || topology == "anchored", "topology must be ring or anchored");
  require(gamma_mode == "drawn" || gamma_mode == "zero", "gamma_mode must be drawn or zero");
  if (topology == "anchored") require(anchor_count >= 3 && anchor_count <= n_fcs, "anchor_count");
}

double conversion_efficiency(double u_v, double i_a, double r_ohm) {
  if (!(u_v > 0.0)) throw DomainError("voltage must be positive");
  if (!(i_a >= 0.0)) throw DomainError("current must be non-negative");
  if (!(r_ohm >= 0.0)) throw DomainError("resistance must be non-negative");
  return 1.0 - i_a * r_ohm / u_v;
}

std::mt19937_64 order_stream(std::uint64_t seed, std::uint64_t order_index) {
  return std::mt19937_64(splitmix64(splitmix64(seed) ^ (order_index * 0xd1b54a32d192ed03ULL)));
}

ChargingOrder simulate_session(const SimEv& ev, const SimFcs& fcs, const SimScenario& sc,
                               std::mt19937_64& rng, const std::string& order_id,
                               std::int64_t start_ts, SessionTruth* truth) {
  double s0 = uniform(rng, sc.soc_start_min, sc.soc_start_max);
  double s1 = uniform(rng, sc.soc_end_min, sc.soc_end_max);
  if (!sc.soc_quantization) {
    s0 = std::round(s0);
    s1 = std::round(s1);
  }
  const double day = static_cast<double>(start_ts - kSimEpoch) / 86400.0;
  const double e_d = ev.e_d_at(day) * (1.0 + normal(rng, ev.rel_repeat_sigma / std::sqrt(s1 - s0)));
  const double i1 = std::max(1.0, ev.base_current_a + normal(rng, sc.current_session_sigma_a));
  double temp = ev.base_temp_c + normal(rng, sc.temp_session_sigma_c);
  if (uniform(rng, 0.0, 1.0) < sc.temp_out_of_band_fraction) {
    temp = uniform(rng, 0.0, 1.0) < 0.5 ? uniform(rng, 5.0, 17.0) : uniform(rng, 43.0, 50.0);
  }

  std::vector<SimLevel> levels;
  if (uniform(rng, 0.0, 1.0) < sc.current_step_fraction && i1 > sc.current_step_a + 1.0) {
    double split = s0 + (s1 - s0) * uniform(rng, 0.35, 0.65);
    if (!sc.soc_quantization) split = std::round(split);
    levels.push_back({i1, 0.0, s0, split});
    levels.push_back({i1 - sc.current_step_a, 0.0, split, s1});
  } else {
    levels.push_back({i1, 0.0, s0, s1});
  }
  const double u = ev.pack_voltage_v;
  std::vector<double> rate(levels.size()), t_from(levels.size()), e_from(levels.size());
  double t = 0.0, e = 0.0;
  for (std::size_t k = 0; k < levels.size(); ++k) {
    auto& lv = levels[k];
    lv.eta = conversion_efficiency(u, lv.current_a, fcs.cable_resistance_ohm);
    lv.e_d_reported = e_d / lv.eta * (1.0 + fcs.gamma_true);
    lv.battery_energy_kwh = e_d * (lv.soc_to - lv.soc_from);
    lv.reported_energy_kwh = lv.e_d_reported * (lv.soc_to - lv.soc_from);
    // Battery power in kW over kWh per percent point gives percent per hour.
    rate[k] = u * lv.current_a * lv.eta / 1000.0 / e_d / 3600.0;
    t_from[k] = t;
    e_from[k] = e;
    t += (lv.soc_to - lv.soc_from) / rate[k];
    e += lv.reported_energy_kwh;
  }
  const double t_end = t;

  ChargingOrder order;
  order.order_id = order_id;
  order.ev_id = ev.ev_id;
  order.fcs_id = fcs.fcs_id;
  order.battery_type = ev.battery_type;
  auto push_point = [&](std::size_t k, double time_s, double soc, int reported_soc) {
    ChargingPoint p;
    p.timestamp = start_ts + static_cast<std::int64_t>(std::llround(time_s));
    p.energy_kwh = e_from[k] + levels[k].e_d_reported * (soc - levels[k].soc_from);
    p.soc_pct = reported_soc;
    p.current_a = levels[k].current_a + normal(rng, sc.current_noise_a);
    p.voltage_v = u;
    p.temp_c = temp;
    order.points.push_back(p);
  };

  if (sc.soc_quantization) {
    auto level_at_time = [&](double time_s) {
      std::size_t k = 0;
      while (k + 1 < levels.size() && time_s > t_from[k + 1]) ++k;
      return k;
    };
    for (double ts = 0.0; ts < t_end - 1.0; ts += sc.sampling_interval_s) {
      const auto k = level_at_time(ts);
      const double soc = levels[k].soc_from + rate[k] * (ts - t_from[k]);
      push_point(k, ts, soc, static_cast<int>(std::floor(soc)));
    }
    push_point(levels.size() - 1, t_end, s1, static_cast<int>(std::floor(s1)));
  } else {
    std::size_t k = 0;
    for (int soc = static_cast<int>(s0); soc <= static_cast<int>(s1); ++soc) {
      while (k + 1 < levels.size() && soc > levels[k].soc_to) ++k;
      const double ts = t_from[k] + (soc - levels[k].soc_from) / rate[k];
      push_point(k, ts, soc, soc);
    }
  }

  if (truth) {
    truth->order_id = order_id;
    truth->ev_id = ev.ev_id;
    truth->fcs_id = fcs.fcs_id;
    truth->gamma_true = fcs.gamma_true;
    truth->e_d_session = e_d;
    truth->soc_start = s0;
    truth->soc_end = s1;
    truth->levels = levels;
  }
  return order;
}

SimDataset generate_dataset(const SimScenario& scenario, int workers) {
  scenario.validate();
  SimDataset ds;
  ds.scenario = scenario;
  std::mt19937_64 rng(splitmix64(scenario.seed));
  ds.stations = make_stations(scenario, rng);

  std::vector<Visit> visits;
  if (scenario.topology == "anchored") {
    visits = anchored_visits(scenario, ds.stations, ds.evs, rng);
  } else {
    for (int i = 0; i < scenario.n_ev; ++i) ds.evs.push_back(make_ev(scenario, rng, static_cast<std::size_t>(i)));
    visits = ring_visits(scenario, ds.evs, rng);
  }
  std::stable_sort(visits.begin(), visits.end(),
                   [](const Visit& a, const Visit& b) { return a.start_ts < b.start_ts; });

  ds.orders.resize(visits.size());
  ds.truth.resize(visits.size());
  parallel_for(visits.size(), workers, [&](std::size_t k) {
    auto stream = order_stream(scenario.seed, k);
    const auto& v = visits[k];
    ds.orders[k] = simulate_session(ds.evs[v.ev], ds.stations[v.fcs], scenario, stream,
                                    padded("O", k + 1, visits.size()), v.start_ts, &ds.truth[k]);
  });
  return ds;
}

std::map<FcsId, double> ground_truth(const std::vector<SimFcs>& stations) {
  std::map<FcsId, double> out;
  for (const auto& s : stations) out[s.fcs_id] = s.gamma_true;
  return out;
}

void write_ground_truth_csv(std::ostream& out, const std::vector<SimFcs>& stations) {
  out << "fcs_id,gamma_true\n";
  for (const auto& s : stations) out << s.fcs_id << ',' << format_double(s.gamma_true) << '\n';
}

std::map<FcsId, double> read_ground_truth_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot read ground truth " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "fcs_id,gamma_true") {
    throw SchemaError("ground truth header must be fcs_id,gamma_true");
  }
  std::map<FcsId, double> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw SchemaError("bad ground truth row: " + line);
    try {
      std::size_t used = 0;
      const std::string value = line.substr(comma + 1);
      const double g = std::stod(value, &used);
      if (used != value.size()) throw std::invalid_argument(value);
      out[line.substr(0, comma)] = g;
    } catch (const std::exception&) {
      throw SchemaError("bad ground truth row: " + line);
    }
  }
  return out;
}

ValidationReport score_verdicts(const std::vector<FcsVerdict>& verdicts,
                                const std::map<FcsId, double>& truth, const EstimationOutcome& outcome,
                                double gamma_t) {
  ValidationReport r;
  r.n_fcs = static_cast<int>(truth.size());
  r.n_rcs = static_cast<int>(outcome.rcs_ids.size());
  r.n_clusters = static_cast<int>(outcome.clusters.size());
  r.n_chains = static_cast<int>(outcome.chains.size());
  r.insufficient_data = outcome.rcs_ids.empty();
  int covered = 0;
  int valid_rcs = 0, correct_rcs = 0, valid_chain = 0, correct_chain = 0;
  for (const auto& v : verdicts) {
    const auto it = truth.find(v.fcs_id);
    if (it == truth.end()) continue;
    ++r.n_estimated;
    const double err = std::abs(it->second - v.gamma);
    r.max_abs_error = std::max(r.max_abs_error, err);
    if (err <= v.sigma_gamma) ++covered;
    if (v.classification == Classification::Unreliable) {
      ++r.n_unreliable;
      continue;
    }
    ++r.n_valid;
    const bool truly_ok = std::abs(it->second) <= gamma_t;
    const bool said_ok = v.classification == Classification::Acceptable;
    if (truly_ok && said_ok) ++r.confusion.acceptable_as_acceptable;
    if (truly_ok && !said_ok) ++r.confusion.acceptable_as_unacceptable;
    if (!truly_ok && said_ok) ++r.confusion.unacceptable_as_acceptable;
    if (!truly_ok && !said_ok) ++r.confusion.unacceptable_as_unacceptable;
    const bool correct = truly_ok == said_ok;
    r.n_correct += correct;
    if (v.provenance.kind == ProvenanceKind::RcsDirect) {
      ++valid_rcs;
      correct_rcs += correct;
    } else {
      ++valid_chain;
      correct_chain += correct;
    }
  }
  auto ratio = [](int a, int b) { return b > 0 ? static_cast<double>(a) / b : 0.0; };
  r.accuracy = ratio(r.n_correct, r.n_valid);
  r.accuracy_rcs = ratio(correct_rcs, valid_rcs);
  r.accuracy_chain = ratio(correct_chain, valid_chain);
  r.coverage = ratio(covered, r.n_estimated);
  return r;
}

ValidationReport run_validation(const SimScenario& scenario, const ModelConfig& cfg, int workers) {
  const auto ds = generate_dataset(scenario, workers);
  const auto result = run_pipeline(ds.orders, cfg, workers);
  return score_verdicts(result.outcome.verdicts, ground_truth(ds.stations), result.outcome,
                        cfg.acceptable_gamma_t);
}

void to_json(nlohmann::json& j, const ValidationReport& v) {
  j = nlohmann::json{
      {"n_fcs", v.n_fcs},
      {"n_estimated", v.n_estimated},
      {"n_valid", v.n_valid},
      {"n_correct", v.n_correct},
      {"n_unreliable", v.n_unreliable},
      {"accuracy", v.accuracy},
      {"accuracy_pct", std::round(v.accuracy * 1000.0) / 10.0},
      {"accuracy_rcs", v.accuracy_rcs},
      {"accuracy_chain", v.accuracy_chain},
      {"coverage", v.coverage},
      {"max_abs_error", v.max_abs_error},
      {"confusion",
       {{"acceptable_as_acceptable", v.confusion.acceptable_as_acceptable},
        {"acceptable_as_unacceptable", v.confusion.acceptable_as_unacceptable},
        {"unacceptable_as_acceptable", v.confusion.unacceptable_as_acceptable},
        {"unacceptable_as_unacceptable", v.confusion.unacceptable_as_unacceptable}}},
      {"n_rcs", v.n_rcs},
      {"n_clusters", v.n_clusters},
      {"n_chains", v.n_chains},
      {"insufficient_data", v.insufficient_data},
  };
}

void to_json(nlohmann::json& j, const SimScenario& v) {
  j = nlohmann::json{
      {"n_fcs", v.n_fcs},
      {"n_ev", v.n_ev},
      {"n_orders", v.n_orders},
      {"seed", v.seed},
      {"sampling_interval_s", v.sampling_interval_s},
      {"rel_repeat_sigma", v.rel_repeat_sigma},
      {"fcs_error_sigma", v.fcs_error_sigma},
      {"fraction_defective", v.fraction_defective},
      {"soc_quantization", v.soc_quantization},
      {"topology", v.topology},
      {"gamma_mode", v.gamma_mode},
  };
}

}  // namespace mpc
