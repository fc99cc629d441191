#include <algorithm>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "doctest.h"
#include "mpc/ingestion.hpp"
#include "mpc/preprocess.hpp"
#include "mpc/simulator.hpp"

using namespace mpc;
using doctest::Approx;

namespace {

ChargingSegment make_segment(const std::string& order, const std::string& ev, const std::string& fcs, double e_d,
                             int dsoc = 40, double temp = 30.0, std::int64_t start = 0) {
  ChargingSegment s;
  s.ev_id = ev;
  s.fcs_id = fcs;
  s.order_id = order;
  s.order_start = start;
  s.delta_soc_pct = dsoc;
  s.delta_energy_kwh = e_d * dsoc;
  s.mean_temp_c = temp;
  s.point_series = {{dsoc, e_d * dsoc}};
  return s;
}

ModelConfig naive_config() {
  ModelConfig cfg;
  cfg.soc_quantization_model = false;
  return cfg;
}

std::set<std::string> keys(const std::vector<ChargingSegment>& v) {
  std::set<std::string> out;
  for (const auto& s : v) out.insert(s.key());
  return out;
}

}  // namespace

TEST_CASE("filter boundaries") {
  ModelConfig cfg;
  const std::vector<ChargingSegment> segs{make_segment("cold", "E", "F", 0.34, 40, 19.9),
                                          make_segment("edge", "E", "F", 0.34, 20, 30.0),
                                          make_segment("short", "E", "F", 0.34, 19, 30.0),
                                          make_segment("hot", "E", "F", 0.34, 40, 40.1),
                                          make_segment("warm", "E", "F", 0.34, 40, 40.0)};
  const auto r = filter_segments(segs, cfg);
  CHECK(keys(r.kept) == std::set<std::string>{"edge:0", "warm:0"});
  REQUIRE(r.excluded.size() == 3);
  CHECK(r.excluded[0].reason == std::string(reason::kTempLow));
  CHECK(r.excluded[1].reason == std::string(reason::kDeltaSoc));
  CHECK(r.excluded[2].reason == std::string(reason::kTempHigh));
}

TEST_CASE("time span anchors at the earliest retained order") {
  ModelConfig cfg;
  const std::int64_t day = 86400;
  // the cold order is earliest but excluded, so it does not set the anchor
  const std::vector<ChargingSegment> segs{make_segment("cold", "E", "F", 0.34, 40, 10.0, 0),
                                          make_segment("a", "E", "F", 0.34, 40, 30.0, 5 * day),
                                          make_segment("b", "E", "F", 0.34, 40, 30.0, 65 * day),
                                          make_segment("c", "E", "F", 0.34, 40, 30.0, 65 * day + 1)};
  const auto r = filter_segments(segs, cfg);
  CHECK(keys(r.kept) == std::set<std::string>{"a:0", "b:0"});
  CHECK(r.excluded.back().reason == std::string(reason::kTimespan));
}

TEST_CASE("LiFePO4 segments are excluded only when labelled") {
  ModelConfig cfg;
  auto lfp = make_segment("lfp", "E", "F", 0.34);
  lfp.battery_type = "LiFePO4";
  auto nmc = make_segment("nmc", "E", "F", 0.34);
  nmc.battery_type = "NMC";
  const auto unlabelled = make_segment("none", "E", "F", 0.34);
  const auto r = filter_segments({lfp, nmc, unlabelled}, cfg);
  CHECK(keys(r.kept) == std::set<std::string>{"nmc:0", "none:0"});
  REQUIRE(r.excluded.size() == 1);
  CHECK(r.excluded[0].reason == std::string(reason::kLiFePO4));
  CHECK(is_lifepo4("lfp"));
  CHECK_FALSE(is_lifepo4(""));
}

TEST_CASE("random pool: predicate oracle and idempotence") {
  ModelConfig cfg;
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> temp(10.0, 50.0), day(0.0, 90.0);
  std::uniform_int_distribution<int> dsoc(5, 60), kind(0, 9);
  std::vector<ChargingSegment> pool;
  for (int i = 0; i < 2000; ++i) {
    auto s = make_segment("O" + std::to_string(i), "E", "F", 0.34, dsoc(rng), temp(rng),
                          static_cast<std::int64_t>(day(rng) * 86400));
    if (kind(rng) == 0) s.battery_type = "LiFePO4";
    pool.push_back(s);
  }
  const auto r = filter_segments(pool, cfg);
  std::int64_t anchor = INT64_MAX;
  for (const auto& s : pool) {
    if (s.mean_temp_c >= 20 && s.mean_temp_c <= 40 && s.delta_soc_pct >= 20 && s.battery_type.empty()) {
      anchor = std::min(anchor, s.order_start);
    }
  }
  std::set<std::string> expected;
  for (const auto& s : pool) {
    const bool temp_ok = s.mean_temp_c >= 20 && s.mean_temp_c <= 40;
    const bool soc_ok = s.delta_soc_pct >= 20;
    const bool battery_ok = s.battery_type.empty();
    const bool time_ok = s.order_start - anchor <= 60 * 86400;
    if (temp_ok && soc_ok && battery_ok && time_ok) expected.insert(s.key());
  }
  CHECK(keys(r.kept) == expected);
  CHECK(r.kept.size() + r.excluded.size() == pool.size());
  const auto again = filter_segments(r.kept, cfg);
  CHECK(keys(again.kept) == keys(r.kept));
  CHECK(again.excluded.empty());
}

TEST_CASE("stability metric") {
  const auto cfg = naive_config();
  const std::vector<ChargingSegment> same{make_segment("a", "E", "F", 0.34), make_segment("b", "E", "F", 0.34)};
  CHECK(ev_stability(same, cfg) == 0.0);

  const std::vector<ChargingSegment> two{make_segment("a", "E", "F", 0.34), make_segment("b", "E", "F", 0.34 * 1.02)};
  CHECK(ev_stability(two, cfg) == Approx(0.34 * 0.01 * std::sqrt(2.0) / (0.34 * 1.01)).epsilon(1e-12));
  CHECK(ev_stability(two, cfg) == Approx(0.014003).epsilon(1e-5));

  // sample with mean 0.34 and sample std 0.017
  std::vector<ChargingSegment> sample;
  for (int i = 0; i < 5; ++i) {
    const double z = (i - 2) / std::sqrt(2.5);
    sample.push_back(make_segment("o" + std::to_string(i), "E", "F", 0.34 + 0.017 * z));
  }
  CHECK(ev_stability(sample, cfg) == Approx(0.05).epsilon(1e-9));

  CHECK_THROWS_AS(ev_stability(std::span(two).first(1), cfg), DomainError);
  const std::vector<ChargingSegment> mixed{make_segment("a", "E", "F", 0.34), make_segment("b", "E", "G", 0.34)};
  CHECK_THROWS_AS(ev_stability(mixed, cfg), DomainError);
}

TEST_CASE("stability screen") {
  const auto cfg = naive_config();
  std::vector<ChargingSegment> pool{
      make_segment("single", "LONE", "F", 0.34),
      make_segment("s1", "STEADY", "F", 0.34), make_segment("s2", "STEADY", "F", 0.34),
      make_segment("s3", "STEADY", "G", 0.36),
      make_segment("u1", "SHAKY", "F", 0.34), make_segment("u2", "SHAKY", "F", 0.34 * 1.0288),
      make_segment("u3", "SHAKY", "G", 0.34),
  };
  // 2.88 % apart gives a sample relative deviation of about 0.02
  CHECK(ev_stability(std::span(pool).subspan(4, 2), cfg) == Approx(0.02).epsilon(0.01));
  const auto r = screen_unstable_evs(pool, cfg);
  CHECK(keys(r.kept) == std::set<std::string>{"single:0", "s1:0", "s2:0", "s3:0"});
  CHECK(r.excluded.size() == 3);
  for (const auto& e : r.excluded) CHECK(e.reason == std::string(reason::kUnstableEv));
  CHECK(r.unscored_evs == std::vector<EvId>{"LONE"});
}

TEST_CASE("battery swap EVs are screened out") {
  SimScenario sc;
  sc.n_fcs = 12;
  sc.n_ev = 40;
  sc.n_orders = 3000;
  sc.seed = 5;
  sc.rel_repeat_sigma = 0.0;
  sc.soc_quantization = false;
  sc.current_step_fraction = 0.0;
  sc.temp_out_of_band_fraction = 0.0;
  sc.swap_fraction = 0.5;
  const auto ds = generate_dataset(sc);
  const auto cfg = naive_config();

  std::map<std::string, std::size_t> order_index;
  for (std::size_t k = 0; k < ds.orders.size(); ++k) order_index[ds.orders[k].order_id] = k;
  std::vector<ChargingSegment> segs;
  for (const auto& o : ds.orders) {
    for (auto& s : segment_order(o, cfg.current_pp_threshold_a)) segs.push_back(std::move(s));
  }
  const auto pool = filter_segments(segs, cfg).kept;
  const auto r = screen_unstable_evs(pool, cfg);

  std::map<std::string, const SimEv*> evs;
  for (const auto& e : ds.evs) evs[e.ev_id] = &e;
  // an EV must go exactly when it charged at one station both before and after its swap
  std::map<std::string, std::map<std::string, std::set<bool>>> phases;
  for (const auto& s : pool) {
    const auto& t = ds.truth[order_index.at(s.order_id)];
    const auto* ev = evs.at(s.ev_id);
    phases[s.ev_id][s.fcs_id].insert(ev->swap_event && t.e_d_session == ev->swap_event->new_e_d_true);
  }
  std::set<std::string> expect_dropped;
  for (const auto& [ev, stations] : phases) {
    for (const auto& [fcs, p] : stations) {
      if (p.size() == 2) expect_dropped.insert(ev);
    }
  }
  std::set<std::string> dropped;
  for (const auto& s : pool) {
    if (!keys(r.kept).count(s.key())) dropped.insert(s.ev_id);
  }
  CHECK(expect_dropped.size() >= 5);
  CHECK(dropped == expect_dropped);
}

TEST_CASE("infeasible inequality systems are dropped") {
  ModelConfig cfg;
  auto bad = make_segment("bad", "E", "F", 0.4, 20);
  bad.point_series = {{10, 4.0}, {20, 12.0}};
  const auto good = make_segment("good", "E", "F", 0.4, 20);
  const auto r = drop_infeasible_segments({bad, good}, cfg);
  CHECK(keys(r.kept) == std::set<std::string>{"good:0"});
  REQUIRE(r.excluded.size() == 1);
  CHECK(r.excluded[0].reason == std::string(reason::kInfeasibleBounds));
  CHECK(drop_infeasible_segments({bad, good}, naive_config()).kept.size() == 2);
}

TEST_CASE("exclusion log") {
  std::ostringstream out;
  write_exclusions_csv(out, {{"O:0", reason::kTempLow}});
  CHECK(out.str() == "segment_key,reason\nO:0,temp_below_window\n");
}
