#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "iad/errors.hpp"
#include "iad/experiment.hpp"

namespace {

struct Overrides {
  std::optional<std::string> config;
  std::vector<std::uint64_t> seeds;
  std::optional<std::string> out;
  std::optional<std::string> detector;
  std::optional<std::size_t> rounds;
  std::optional<std::size_t> epochs;
  std::optional<double> inv_tau;
  std::optional<std::string> criterion;
  std::optional<std::size_t> ensemble;
  std::optional<double> subsample;
  std::optional<std::string> data;
  std::optional<std::string> label_column;
  std::optional<double> contamination;
  bool no_standardize = false;
};

void add_run_options(CLI::App* app, Overrides& o) {
  app->add_option("-c,--config", o.config, "JSON run config");
  app->add_option("-s,--seed", o.seeds, "seed (repeatable)");
  app->add_option("-o,--out", o.out, "output directory");
  app->add_option("--detector", o.detector, "svdd-oc | svdd-sb | ae | maf");
  app->add_option("--rounds", o.rounds, "number of IAD rounds T");
  app->add_option("--epochs", o.epochs, "epochs per round");
  app->add_option("--inv-tau", o.inv_tau, "1/tau");
  app->add_option("--criterion", o.criterion, "rankcross | fixed:K | last | otsu");
  app->add_option("--ensemble", o.ensemble, "number of ensemble members");
  app->add_option("--subsample", o.subsample, "ensemble member subsample fraction");
  app->add_option("--data", o.data, "CSV file (synthetic data when omitted)");
  app->add_option("--label-column", o.label_column, "label column name or 0-based index");
  app->add_option("--contamination", o.contamination, "anomaly fraction");
  app->add_flag("--no-standardize", o.no_standardize, "skip feature standardization");
}

iad::RunConfig resolve(const Overrides& o) {
  iad::RunConfig c = o.config ? iad::load_run_config(*o.config) : iad::RunConfig{};
  if (!o.seeds.empty()) c.seeds = o.seeds;
  if (o.out) c.output_dir = *o.out;
  if (o.detector) c.detector.kind = iad::parse_detector_kind(*o.detector);
  if (o.rounds) c.iad.rounds = *o.rounds;
  if (o.epochs) c.iad.epochs = *o.epochs;
  if (o.inv_tau) c.iad.inv_tau = *o.inv_tau;
  if (o.criterion) c.iad.criterion = iad::Criterion::parse(*o.criterion);
  if (o.ensemble || o.subsample) {
    iad::EnsembleConfig e = c.ensemble.value_or(iad::EnsembleConfig{});
    if (o.ensemble) e.members = *o.ensemble;
    if (o.subsample) e.subsample = *o.subsample;
    c.ensemble = e;
  }
  if (o.data) c.data.path = *o.data;
  if (o.label_column) {
    const std::string& l = *o.label_column;
    const bool numeric = !l.empty() && l.find_first_not_of("0123456789") == std::string::npos;
    c.data.label = numeric ? iad::LabelColumn::by_index(std::stoul(l)) : iad::LabelColumn::by_name(l);
  }
  if (o.contamination) c.data.contamination = *o.contamination;
  if (o.no_standardize) c.data.standardize = false;
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Iterative importance-weighted anomaly detection"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(iad::code_version()));

  Overrides train_opts;
  CLI::App* train = app.add_subcommand("train", "train and evaluate over seeds");
  add_run_options(train, train_opts);

  Overrides sweep_opts;
  std::string axis;
  std::vector<std::string> values;
  CLI::App* sweep = app.add_subcommand("sweep", "repeat training across values of one setting");
  add_run_options(sweep, sweep_opts);
  sweep->add_option("--axis", axis, "contamination | tau | criterion")->required();
  sweep->add_option("--values", values, "values to sweep")->required()->delimiter(',');

  std::vector<std::string> dirs;
  std::optional<std::string> csv;
  CLI::App* report = app.add_subcommand("report", "summarize finished runs");
  report->add_option("dirs", dirs, "run directories")->required();
  report->add_option("--csv", csv, "also write a CSV table");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? iad::kExitOk : iad::kExitConfig;
  }

  try {
    if (*train) return iad::cmd_train(resolve(train_opts), std::cout);
    if (*sweep) {
      return iad::cmd_sweep(resolve(sweep_opts), iad::parse_sweep_axis(axis), values, std::cout);
    }
    std::vector<std::filesystem::path> paths(dirs.begin(), dirs.end());
    std::optional<std::filesystem::path> csv_path;
    if (csv) csv_path = *csv;
    return iad::cmd_report(paths, std::cout, csv_path);
  } catch (const iad::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return iad::kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return iad::kExitRuntime;
  }
}
