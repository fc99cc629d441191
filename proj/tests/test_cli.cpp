#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "doctest.h"
#include "mpc/cli.hpp"
#include "mpc/simulator.hpp"
#include "nlohmann/json.hpp"

using namespace mpc;
namespace fs = std::filesystem;

namespace {

struct Run {
  int rc;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "mpc");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int rc = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {rc, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  f << text;
}

// Fresh scratch directory per test case.
struct Scratch {
  fs::path dir;
  explicit Scratch(const std::string& name) : dir(fs::temp_directory_path() / ("mpc_cli_" + name)) {
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Scratch() { fs::remove_all(dir); }
  std::string operator/(const std::string& leaf) const { return (dir / leaf).string(); }
};

const std::string kSmall[] = {"--fcs", "50", "--ev", "120", "--orders", "700", "--seed", "7"};

const char* kExactConfig =
    "# noise-free anchored fleet\n"
    "topology = anchored\n"
    "n_fcs = 60\n"
    "rel_repeat_sigma = 0\n"
    "soc_quantization = false\n"
    "soc_quantization_model = false\n"
    "cable_resistance_ohm = 0\n"
    "current_step_fraction = 0\n"
    "current_session_sigma_a = 0\n"
    "temp_out_of_band_fraction = 0\n"
    "swap_fraction = 0\n";

}  // namespace

TEST_CASE("simulate is deterministic and flags match the config file") {
  Scratch s("simulate");
  std::vector<std::string> a{"simulate", "--out", s / "a"}, b{"simulate", "--out", s / "b"};
  a.insert(a.end(), std::begin(kSmall), std::end(kSmall));
  b.insert(b.end(), std::begin(kSmall), std::end(kSmall));
  const auto ra = run(a);
  REQUIRE(ra.rc == 0);
  CHECK(ra.out.find("simulated 700 orders, 50 stations, 120 EVs") == 0);
  REQUIRE(run(b).rc == 0);
  CHECK(slurp(s / "a/orders.csv") == slurp(s / "b/orders.csv"));
  CHECK(slurp(s / "a/ground_truth.csv") == slurp(s / "b/ground_truth.csv"));
  CHECK(slurp(s / "a/orders.csv").size() > 1000);

  write_text(s / "scenario.conf", "n_fcs = 50\nn_ev = 120\nn_orders = 700\nseed = 7\n");
  REQUIRE(run({"simulate", "--config", s / "scenario.conf", "--out", s / "c"}).rc == 0);
  CHECK(slurp(s / "a/orders.csv") == slurp(s / "c/orders.csv"));

  REQUIRE(run({"simulate", "--config", s / "scenario.conf", "--workers", "3", "--out", s / "d"}).rc == 0);
  CHECK(slurp(s / "a/orders.csv") == slurp(s / "d/orders.csv"));
}

TEST_CASE("default scenario keeps the reference order-to-station ratio") {
  const SimScenario sc;
  CHECK(static_cast<double>(sc.n_orders) / sc.n_fcs == doctest::Approx(7195.0 / 567.0).epsilon(0.1));
}

TEST_CASE("estimate and validate on noise-free data") {
  Scratch s("exact");
  write_text(s / "exact.conf", kExactConfig);
  REQUIRE(run({"simulate", "--config", s / "exact.conf", "--out", s / "data"}).rc == 0);
  const auto est = run({"estimate", "--config", s / "exact.conf", "--input", s / "data/orders.csv", "--out", s / "est"});
  REQUIRE(est.rc == 0);
  CHECK(est.out.find("estimated ") == 0);
  for (const char* f : {"verdicts.json", "verdicts.csv", "rejects.csv", "quarantine.csv", "exclusions.csv"}) {
    CHECK(fs::is_regular_file(s.dir / "est" / f));
  }

  std::map<std::string, double> truth;
  std::istringstream gt(slurp(s / "data/ground_truth.csv"));
  std::string line;
  std::getline(gt, line);
  while (std::getline(gt, line)) truth[line.substr(0, line.find(','))] = std::stod(line.substr(line.find(',') + 1));

  const auto report = nlohmann::json::parse(slurp(s / "est/verdicts.json"));
  const auto& verdicts = report.at("verdicts");
  REQUIRE(verdicts.size() > 20);
  for (const auto& v : verdicts) {
    CHECK(std::abs(v.at("gamma").get<double>() - truth.at(v.at("fcs_id").get<std::string>())) <= 1e-10);
  }

  // bookkeeping: every station seen is either estimated or listed as unestimated
  const auto& meta = report.at("metadata");
  CHECK(meta.at("n_estimated").get<std::size_t>() == verdicts.size());
  CHECK(verdicts.size() <= meta.at("n_fcs").get<std::size_t>());
  std::set<std::string> seen;
  for (const auto& v : verdicts) seen.insert(v.at("fcs_id").get<std::string>());
  for (const auto& u : report.at("unestimated")) CHECK(seen.insert(u.get<std::string>()).second);
  CHECK(seen.size() == meta.at("n_fcs").get<std::size_t>());

  const auto val = run({"validate", "--config", s / "exact.conf", "--input", s / "data/orders.csv", "--ground-truth",
                        s / "data/ground_truth.csv", "--out", s / "val"});
  REQUIRE(val.rc == 0);
  CHECK(val.out.find("accuracy 100.0% over ") == 0);
  const auto vr = nlohmann::json::parse(slurp(s / "val/validation.json"));
  CHECK(vr.at("confusion").at("acceptable_as_unacceptable") == 0);
  CHECK(vr.at("confusion").at("unacceptable_as_acceptable") == 0);
  CHECK(vr.at("max_abs_error").get<double>() <= 1e-10);
  CHECK(vr.contains("n_unreliable"));
}

TEST_CASE("defaults equal an explicit reference configuration") {
  Scratch s("defaults");
  std::vector<std::string> sim{"simulate", "--out", s / "data"};
  sim.insert(sim.end(), std::begin(kSmall), std::end(kSmall));
  REQUIRE(run(sim).rc == 0);
  write_text(s / "table.conf",
             "current_pp_threshold_a = 4\nmin_delta_soc_pct = 20\nbped_rel_repeat = 0.06\nmin_rcs_fcs_count = 3\n"
             "expected_bped_stability_threshold = 0.01\nfcs_error_sigma = 0.0162\nrcs_rel_error_threshold_l = 0.0067\n"
             "max_chain_len_fcs = 4\nd_temperature_threshold_c = 5\nacceptable_gamma_t = 0.02\n"
             "temp_window_c = 20, 40\nmax_timespan_days = 60\nsigma_r_cv = 0.002\neta_fixed = 1.0\n"
             "d_current_threshold_a = 4\n");
  REQUIRE(run({"estimate", "--input", s / "data/orders.csv", "--out", s / "plain"}).rc == 0);
  REQUIRE(run({"estimate", "--config", s / "table.conf", "--input", s / "data/orders.csv", "--out", s / "explicit"}).rc == 0);
  REQUIRE(run({"estimate", "--workers", "3", "--input", s / "data/orders.csv", "--out", s / "threads"}).rc == 0);
  for (const char* f : {"verdicts.json", "verdicts.csv", "exclusions.csv"}) {
    CHECK(slurp(s.dir / "plain" / f) == slurp(s.dir / "explicit" / f));
    CHECK(slurp(s.dir / "plain" / f) == slurp(s.dir / "threads" / f));
  }
  CHECK(slurp(s / "plain/verdicts.csv").rfind("fcs_id,gamma_pct,sigma_pct,p_acceptable_pct,classification,provenance\n", 0) == 0);
}

TEST_CASE("error exits") {
  Scratch s("errors");
  CHECK(run({}).rc == 2);
  CHECK(run({"--help"}).rc == 0);
  CHECK(run({"estimate"}).rc == 2);
  CHECK(run({"estimate", "--input", s / "nope.csv"}).rc == 2);

  write_text(s / "bad.csv", "order_id,ev_id,fcs_id,timestamp,energy_kwh\nO,E,F,2024-03-01T00:00:00Z,0\n");
  const auto schema = run({"estimate", "--input", s / "bad.csv", "--out", s / "o"});
  CHECK(schema.rc == 2);
  CHECK(schema.err.find("error: ") == 0);

  std::vector<std::string> sim{"simulate", "--out", s / "data"};
  sim.insert(sim.end(), std::begin(kSmall), std::end(kSmall));
  REQUIRE(run(sim).rc == 0);
  CHECK(run({"validate", "--input", s / "data/orders.csv", "--out", s / "v"}).rc == 2);
  CHECK(run({"validate", "--input", s / "data/orders.csv", "--ground-truth", s / "missing.csv", "--out", s / "v"}).rc == 2);

  // a regular file where a directory is needed
  CHECK(run({"simulate", "--fcs", "5", "--ev", "5", "--orders", "5", "--out", s / "data/orders.csv/sub"}).rc == 2);

  write_text(s / "typo.conf", "n_fsc = 5\n");
  CHECK(run({"simulate", "--config", s / "typo.conf", "--out", s / "t"}).rc == 2);
  write_text(s / "value.conf", "n_fcs = five\n");
  CHECK(run({"simulate", "--config", s / "value.conf", "--out", s / "t"}).rc == 2);
  CHECK(run({"simulate", "--config", s / "absent.conf", "--out", s / "t"}).rc == 2);
}

TEST_CASE("zero reference stations is a warning, not an error") {
  Scratch s("norcs");
  REQUIRE(run({"simulate", "--fcs", "20", "--ev", "30", "--orders", "200", "--out", s / "data"}).rc == 0);
  write_text(s / "strict.conf", "min_rcs_fcs_count = 7\n");
  const auto r = run({"estimate", "--config", s / "strict.conf", "--input", s / "data/orders.csv", "--out", s / "e"});
  CHECK(r.rc == 0);
  CHECK(r.out.find("warning: ") != std::string::npos);
  const auto report = nlohmann::json::parse(slurp(s / "e/verdicts.json"));
  CHECK(report.at("warnings").size() == 1);
  CHECK(report.at("verdicts").empty());
}

TEST_CASE("repeated runs are byte-identical") {
  Scratch s("repeat");
  for (const char* d : {"r1", "r2"}) {
    const std::string base = s / d;
    std::vector<std::string> sim{"simulate", "--out", base};
    sim.insert(sim.end(), std::begin(kSmall), std::end(kSmall));
    REQUIRE(run(sim).rc == 0);
    REQUIRE(run({"estimate", "--input", base + "/orders.csv", "--out", base}).rc == 0);
    REQUIRE(run({"validate", "--input", base + "/orders.csv", "--ground-truth", base + "/ground_truth.csv", "--out", base})
                .rc == 0);
  }
  for (const char* f : {"orders.csv", "ground_truth.csv", "verdicts.json", "verdicts.csv", "rejects.csv",
                        "quarantine.csv", "exclusions.csv", "validation.json"}) {
    CHECK(slurp(s.dir / "r1" / f) == slurp(s.dir / "r2" / f));
  }
}
