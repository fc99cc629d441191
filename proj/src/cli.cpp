#include "mpc/cli.hpp"

#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>

#include "CLI11.hpp"
#include "mpc/config.hpp"
#include "mpc/ingestion.hpp"
#include "mpc/pipeline.hpp"
#include "mpc/report.hpp"
#include "mpc/simulator.hpp"

namespace mpc {
namespace {

namespace fs = std::filesystem;

struct Options {
  std::string input;
  std::string out = ".";
  std::string config;
  std::string ground_truth;
  std::optional<std::uint64_t> seed;
  std::optional<int> fcs;
  std::optional<int> ev;
  std::optional<int> orders;
  int workers = 1;
};

std::ofstream open_output(const fs::path& dir, const char* name) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  std::ofstream f(dir / name, std::ios::binary);
  if (!f) throw DataError("cannot write " + (dir / name).string());
  return f;
}

void finish(std::ofstream& f, const fs::path& dir, const char* name) {
  f.flush();
  if (!f) throw DataError("failed writing " + (dir / name).string());
}

template <class Writer>
void write_file(const fs::path& dir, const char* name, Writer&& writer) {
  auto f = open_output(dir, name);
  writer(f);
  finish(f, dir, name);
}

void load_settings(const Options& o, ModelConfig& model, SimScenario& scenario) {
  if (!o.config.empty()) load_config(o.config, model, scenario);
  if (o.seed) scenario.seed = *o.seed;
  if (o.fcs) scenario.n_fcs = *o.fcs;
  if (o.ev) scenario.n_ev = *o.ev;
  if (o.orders) scenario.n_orders = *o.orders;
  model.validate();
  scenario.validate();
}

ParseResult read_input(const Options& o) {
  if (!fs::is_regular_file(o.input)) throw DataError("input file not found: " + o.input);
  return parse_orders(fs::path(o.input));
}

int cmd_simulate(const Options& o, std::ostream& out) {
  ModelConfig model;
  SimScenario scenario;
  load_settings(o, model, scenario);
  const auto ds = generate_dataset(scenario, o.workers);
  const fs::path dir = o.out;
  write_file(dir, "orders.csv", [&](std::ostream& f) {
    write_orders_csv(f, ds.orders, scenario.lifepo4_fraction > 0.0);
  });
  write_file(dir, "ground_truth.csv", [&](std::ostream& f) { write_ground_truth_csv(f, ds.stations); });
  out << "simulated " << ds.orders.size() << " orders, " << ds.stations.size() << " stations, "
      << ds.evs.size() << " EVs -> " << dir.string() << '\n';
  return 0;
}

int cmd_estimate(const Options& o, std::ostream& out) {
  ModelConfig model;
  SimScenario scenario;
  load_settings(o, model, scenario);
  const auto parsed = read_input(o);
  const auto result = run_pipeline(parsed.orders, model, o.workers);
  const fs::path dir = o.out;
  write_file(dir, "verdicts.json", [&](std::ostream& f) { f << verdict_report(result, model).dump(2) << '\n'; });
  write_file(dir, "verdicts.csv", [&](std::ostream& f) { write_verdicts_csv(f, result.outcome.verdicts); });
  write_file(dir, "rejects.csv", [&](std::ostream& f) { write_rejects_csv(f, parsed); });
  write_file(dir, "quarantine.csv", [&](std::ostream& f) { write_quarantine_csv(f, parsed.quarantined); });
  write_file(dir, "exclusions.csv", [&](std::ostream& f) { write_exclusions_csv(f, result.exclusions); });
  out << "estimated " << result.outcome.verdicts.size() << " of " << result.all_fcs.size()
      << " stations (" << result.outcome.rcs_ids.size() << " reference, " << result.outcome.chains.size()
      << " chains)\n";
  for (const auto& w : result.warnings) out << "warning: " << w << '\n';
  return 0;
}

int cmd_validate(const Options& o, std::ostream& out) {
  ModelConfig model;
  SimScenario scenario;
  load_settings(o, model, scenario);
  if (o.ground_truth.empty() || !fs::is_regular_file(o.ground_truth)) {
    throw DataError("ground truth file not found: " + o.ground_truth);
  }
  const auto truth = read_ground_truth_csv(o.ground_truth);
  const auto parsed = read_input(o);
  const auto result = run_pipeline(parsed.orders, model, o.workers);
  const auto report = score_verdicts(result.outcome.verdicts, truth, result.outcome, model.acceptable_gamma_t);
  const fs::path dir = o.out;
  write_file(dir, "validation.json", [&](std::ostream& f) { f << nlohmann::json(report).dump(2) << '\n'; });
  out << "accuracy " << percent1(report.accuracy) << "% over " << report.n_valid << " valid verdicts, "
      << report.n_unreliable << " unreliable, coverage " << percent1(report.coverage) << "%\n";
  if (report.insufficient_data) out << "warning: insufficient data, no reference station found\n";
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Metering error estimation for DC fast-charging stations"};
  app.require_subcommand(1);
  Options o;

  auto common = [&o](CLI::App* sub) {
    sub->add_option("--config", o.config, "flat key = value configuration file");
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--workers", o.workers, "worker threads")->check(CLI::PositiveNumber);
  };
  auto* simulate = app.add_subcommand("simulate", "generate a synthetic fleet with ground truth");
  common(simulate);
  simulate->add_option("--seed", o.seed, "random seed");
  simulate->add_option("--fcs", o.fcs, "number of stations");
  simulate->add_option("--ev", o.ev, "number of EVs");
  simulate->add_option("--orders", o.orders, "number of charging orders");

  auto* estimate = app.add_subcommand("estimate", "estimate station errors from charging orders");
  common(estimate);
  estimate->add_option("--input", o.input, "charging-order CSV")->required();

  auto* validate = app.add_subcommand("validate", "score estimates against ground truth");
  common(validate);
  validate->add_option("--input", o.input, "charging-order CSV")->required();
  validate->add_option("--ground-truth", o.ground_truth, "fcs_id,gamma_true CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e, out, err);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (simulate->parsed()) return cmd_simulate(o, out);
    if (estimate->parsed()) return cmd_estimate(o, out);
    return cmd_validate(o, out);
  } catch (const InvariantError& e) {
    err << "internal error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
}

}  // namespace mpc
