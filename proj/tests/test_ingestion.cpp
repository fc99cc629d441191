#include <algorithm>
#include <random>
#include <sstream>

#include "doctest.h"
#include "mpc/ingestion.hpp"
#include "mpc/simulator.hpp"

using namespace mpc;

namespace {

const std::string kHeader =
    "order_id,ev_id,fcs_id,timestamp,energy_kwh,soc_pct,current_a,voltage_v,temp_c\n";

ParseResult parse_text(const std::string& text) {
  std::istringstream in(text);
  return parse_orders(in);
}

ChargingOrder order_with_currents(const std::vector<double>& currents) {
  ChargingOrder o{"O", "EV", "F", "", {}};
  for (std::size_t i = 0; i < currents.size(); ++i) {
    o.points.push_back({static_cast<std::int64_t>(60 * i), 0.5 * static_cast<double>(i), static_cast<int>(10 + i),
                        currents[i], 400.0, 25.0});
  }
  return o;
}

// Fewest contiguous blocks with peak-to-peak current within the threshold,
// by enumerating every set of cut positions.
std::size_t brute_force_blocks(const std::vector<double>& c, double threshold) {
  const std::size_t n = c.size();
  std::size_t best = n;
  for (std::uint32_t mask = 0; mask < (1u << (n - 1)); ++mask) {
    std::size_t blocks = 1, start = 0;
    bool ok = true;
    for (std::size_t i = 0; i < n && ok; ++i) {
      const bool cut = i + 1 == n || (mask >> i & 1u);
      if (!cut) continue;
      const auto [lo, hi] = std::minmax_element(c.begin() + static_cast<long>(start), c.begin() + static_cast<long>(i) + 1);
      ok = *hi - *lo <= threshold;
      start = i + 1;
      if (i + 1 < n) ++blocks;
    }
    if (ok) best = std::min(best, blocks);
  }
  return best;
}

}  // namespace

TEST_CASE("timestamps") {
  CHECK(parse_timestamp("2024-03-01T00:00:00Z") == 1709251200);
  CHECK(parse_timestamp("2024-03-01T00:00:00") == 1709251200);
  CHECK(parse_timestamp("2024-03-01T00:00:01+00:00") == 1709251201);
  CHECK(parse_timestamp("2024-03-01 00:00:00") == 1709251200);
  CHECK_FALSE(parse_timestamp("2024/03/01T00:00:00").has_value());
  CHECK_FALSE(parse_timestamp("2024-02-30T00:00:00Z").has_value());
  CHECK_FALSE(parse_timestamp("2024-03-01T00:00:00+08:00").has_value());
  CHECK(format_timestamp(1709251200) == "2024-03-01T00:00:00Z");
  CHECK(parse_timestamp(format_timestamp(1712345678)) == 1712345678);
}

TEST_CASE("shortest double text reads back exactly") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1e3, 1e3);
  for (int i = 0; i < 1000; ++i) {
    const double v = u(rng);
    CHECK(std::stod(format_double(v)) == v);
  }
  CHECK(format_double(0.1) == "0.1");
}

TEST_CASE("two valid rows make one order") {
  const auto r = parse_text(kHeader +
                            "O1,EV1,F1,2024-03-01T00:01:00Z,1.5,22,43,400,28\n"
                            "O1,EV1,F1,2024-03-01T00:00:00Z,0,20,43,400,28\n");
  REQUIRE(r.orders.size() == 1);
  CHECK(r.rejects.empty());
  CHECK(r.quarantined.empty());
  REQUIRE(r.orders[0].points.size() == 2);
  CHECK(r.orders[0].points[0].soc_pct == 20);  // sorted by time
  CHECK(r.orders[0].battery_type.empty());
}

TEST_CASE("malformed rows are rejected with a reason") {
  const auto r = parse_text(kHeader +
                            "O1,EV1,F1,2024-03-01T00:00:00Z,0,45.5,43,400,28\n"
                            "O1,EV1,F1,2024-03-01T00:01:00Z,0,46,abc,400,28\n"
                            "O1,EV1,F1,not-a-time,0,46,43,400,28\n"
                            "O1,EV1,F1,2024-03-01T00:02:00Z,0,146,43,400,28\n"
                            ",EV1,F1,2024-03-01T00:03:00Z,0,46,43,400,28\n"
                            "O1,EV1,F1,2024-03-01T00:04:00Z,0\n");
  REQUIRE(r.rejects.size() == 6);
  CHECK(r.rejects[0].reason == "fractional SOC");
  CHECK(r.rejects[0].line == 2);
  CHECK(r.rejects[1].reason == "non-numeric field");
  CHECK(r.rejects[2].reason == "bad timestamp");
  CHECK(r.rejects[3].reason == "SOC out of range");
  CHECK(r.rejects[4].reason == "missing identifier");
  CHECK(r.rejects[5].reason == "wrong field count");
  std::ostringstream out;
  write_rejects_csv(out, r);
  CHECK(out.str().find("reject_reason") != std::string::npos);
  CHECK(out.str().find("fractional SOC") != std::string::npos);
}

TEST_CASE("orders violating monotonicity are quarantined") {
  const auto r = parse_text(kHeader +
                            "A,EV1,F1,2024-03-01T00:00:00Z,5,20,43,400,28\n"
                            "A,EV1,F1,2024-03-01T00:01:00Z,4,22,43,400,28\n"
                            "B,EV1,F1,2024-03-01T00:00:00Z,0,20,43,400,28\n"
                            "B,EV1,F1,2024-03-01T00:00:00Z,1,21,43,400,28\n"
                            "C,EV1,F1,2024-03-01T00:00:00Z,0,20,43,400,28\n"
                            "D,EV1,F1,2024-03-01T00:00:00Z,0,20,43,400,28\n"
                            "D,EV2,F1,2024-03-01T00:01:00Z,1,21,43,400,28\n"
                            "E,EV1,F1,2024-03-01T00:00:00Z,0,22,43,400,28\n"
                            "E,EV1,F1,2024-03-01T00:01:00Z,1,21,43,400,28\n");
  CHECK(r.orders.empty());
  REQUIRE(r.quarantined.size() == 5);
  CHECK(r.quarantined[0].reason == "non-monotone energy");
  CHECK(r.quarantined[1].reason == "duplicate timestamp");
  CHECK(r.quarantined[2].reason == "fewer than 2 points");
  CHECK(r.quarantined[3].reason.find("inconsistent") != std::string::npos);
  CHECK(r.quarantined[4].reason == "non-monotone SOC");
}

TEST_CASE("missing column is a schema error") {
  CHECK_THROWS_AS(parse_text("order_id,ev_id,fcs_id,timestamp,energy_kwh,soc_pct,current_a,voltage_v\n"), SchemaError);
  CHECK_THROWS_AS(parse_text(""), SchemaError);
}

TEST_CASE("battery type column is optional") {
  const auto r = parse_text("order_id,ev_id,fcs_id,timestamp,energy_kwh,soc_pct,current_a,voltage_v,temp_c,battery_type\n"
                            "O1,EV1,F1,2024-03-01T00:00:00Z,0,20,43,400,28,LiFePO4\n"
                            "O1,EV1,F1,2024-03-01T00:01:00Z,1,22,43,400,28,LiFePO4\n");
  REQUIRE(r.orders.size() == 1);
  CHECK(r.orders[0].battery_type == "LiFePO4");
}

TEST_CASE("constant current gives one segment") {
  auto o = order_with_currents(std::vector<double>(30, 43.0));
  const auto segs = segment_order(o, 4.0);
  REQUIRE(segs.size() == 1);
  CHECK(segs[0].first_point == 0);
  CHECK(segs[0].last_point == 29);
  CHECK(segs[0].delta_soc_pct == 29);
  CHECK(segs[0].delta_energy_kwh == o.points[29].energy_kwh - o.points[0].energy_kwh);
  CHECK(segs[0].point_series.size() == 29);
  CHECK(segs[0].point_series.back().delta_soc_pct == 29);
}

TEST_CASE("current step splits the order") {
  std::vector<double> c(10, 40.0);
  c.insert(c.end(), 10, 90.0);
  const auto segs = segment_order(order_with_currents(c), 4.0);
  REQUIRE(segs.size() == 2);
  CHECK(segs[0].last_point == 9);
  CHECK(segs[1].first_point == 10);
  CHECK(segs[0].mean_current_a == 40.0);
  CHECK(segs[1].mean_current_a == 90.0);
  CHECK(segs[1].segment_index == 1);
}

TEST_CASE("greedy segmentation uses the fewest blocks") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> jitter(-3.0, 3.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> c;
    double level = 100.0;
    for (int i = 0; i < 20; ++i) {
      if (i % 5 == 0) level += jitter(rng) * 2.0;
      c.push_back(level + jitter(rng));
    }
    const auto runs = current_runs(order_with_currents(c), 4.0);
    CHECK(runs.size() == brute_force_blocks(c, 4.0));
    // blocks tile the order and respect the threshold
    std::size_t next = 0;
    for (const auto& [a, b] : runs) {
      CHECK(a == next);
      const auto [lo, hi] = std::minmax_element(c.begin() + static_cast<long>(a), c.begin() + static_cast<long>(b) + 1);
      CHECK(*hi - *lo <= 4.0);
      next = b + 1;
    }
    CHECK(next == c.size());
  }
}

TEST_CASE("segments never overlap and stay within the threshold") {
  SimScenario sc;
  sc.n_fcs = 20;
  sc.n_ev = 30;
  sc.n_orders = 200;
  sc.current_step_fraction = 0.5;
  const auto ds = generate_dataset(sc);
  for (const auto& o : ds.orders) {
    std::size_t prev_end = 0;
    bool first = true;
    for (const auto& s : segment_order(o, 4.0)) {
      CHECK(s.peak_to_peak_current_a <= 4.0);
      CHECK(s.last_point < o.points.size());
      if (!first) CHECK(s.first_point > prev_end);
      prev_end = s.last_point;
      first = false;
      CHECK(s.delta_energy_kwh == o.points[s.last_point].energy_kwh - o.points[s.first_point].energy_kwh);
      CHECK(s.delta_soc_pct >= 1);
    }
  }
}

TEST_CASE("simulator output reads back unchanged") {
  SimScenario sc;
  sc.n_fcs = 10;
  sc.n_ev = 20;
  sc.n_orders = 50;
  sc.lifepo4_fraction = 0.3;
  const auto ds = generate_dataset(sc);
  std::stringstream buf;
  write_orders_csv(buf, ds.orders, true);
  const auto r = parse_orders(buf);
  CHECK(r.rejects.empty());
  CHECK(r.quarantined.empty());
  REQUIRE(r.orders.size() == ds.orders.size());
  for (std::size_t i = 0; i < r.orders.size(); ++i) {
    CHECK(r.orders[i].order_id == ds.orders[i].order_id);
    CHECK(r.orders[i].battery_type == ds.orders[i].battery_type);
    REQUIRE(r.orders[i].points.size() == ds.orders[i].points.size());
    for (std::size_t k = 0; k < r.orders[i].points.size(); ++k) {
      CHECK(r.orders[i].points[k].energy_kwh == ds.orders[i].points[k].energy_kwh);
      CHECK(r.orders[i].points[k].current_a == ds.orders[i].points[k].current_a);
    }
  }
}
