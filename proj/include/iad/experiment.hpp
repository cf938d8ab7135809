#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "iad/dataset.hpp"
#include "iad/detector.hpp"
#include "iad/iad.hpp"
#include "iad/report.hpp"

namespace iad {

enum ExitCode : int { kExitOk = 0, kExitConfig = 1, kExitRuntime = 2 };

struct DataSource {
  /// CSV input; when absent the synthetic two-Gaussian generator is used.
  std::optional<std::filesystem::path> path;
  LabelColumn label;
  /// Anomaly fraction: scenario target for CSV data, mixture ratio for synthetic.
  std::optional<double> contamination;
  bool standardize = true;
  /// Seed for scenario subsampling / synthetic draws. Unset: the run seed.
  std::optional<std::uint64_t> data_seed;

  std::size_t synth_n = 2000;
  std::size_t synth_d = 10;
  double synth_separation = 3.0;
  double synth_contamination = 0.1;
};

struct RunConfig {
  DataSource data;
  DetectorConfig detector;
  IadConfig iad;
  std::vector<std::uint64_t> seeds{0};
  std::filesystem::path output_dir = "runs/default";
  std::optional<EnsembleConfig> ensemble;

  void validate() const;
  /// Fully resolved document; every default is spelled out.
  nlohmann::json to_json() const;
  /// Keys absent from `j` keep their values from `base`.
  static RunConfig from_json(const nlohmann::json& j, const RunConfig& base);
  static RunConfig from_json(const nlohmann::json& j);
};

RunConfig load_run_config(const std::filesystem::path& path, const RunConfig& base);
RunConfig load_run_config(const std::filesystem::path& path);

/// Dataset after scenario construction and standardization for one seed.
struct PreparedData {
  Dataset data;
  std::optional<ScenarioManifest> scenario;
};
PreparedData prepare_data(const DataSource& source, std::uint64_t seed);

struct SeedRun {
  std::uint64_t seed = 0;
  std::optional<PreparedData> prepared;
  IadResult result;
  EvalReport report;
};

/// Trains and evaluates one seed. Labels reach only the reporting step.
SeedRun run_seed(const RunConfig& config, std::uint64_t seed);

/// Writes history.csv, report.json, checkpoint.json and config.json into `dir`.
void write_seed_outputs(const SeedRun& run, const RunConfig& config,
                        const std::filesystem::path& dir);

struct Aggregate {
  std::string dataset;
  std::string detector;
  std::size_t seeds = 0;
  std::size_t aborted = 0;
  std::vector<double> base_auc;
  std::vector<double> iad_auc;
  std::vector<double> best_auc;
  /// PGR per criterion name over seeds where it is defined.
  std::vector<std::pair<std::string, std::vector<double>>> criterion_pgr;

  nlohmann::json to_json() const;
};

/// Aggregates seed report.json documents.
Aggregate aggregate_reports(const std::vector<nlohmann::json>& reports, std::string dataset,
                            std::string detector);

/// Reads every seed_*/report.json under `run_dir`. Throws LoadError when the
/// directory holds no readable reports.
Aggregate collect_run(const std::filesystem::path& run_dir);

/// Worker cap from IAD_MAX_WORKERS (default 1).
std::size_t max_workers();

int cmd_train(const RunConfig& config, std::ostream& log);

enum class SweepAxis { kContamination, kTau, kCriterion };
SweepAxis parse_sweep_axis(std::string_view name);

int cmd_sweep(const RunConfig& config, SweepAxis axis, const std::vector<std::string>& values,
              std::ostream& log);

/// Merges run directories into a Table-II-style text table (to `out`) and a
/// CSV (to `csv_path` when given).
int cmd_report(const std::vector<std::filesystem::path>& run_dirs, std::ostream& out,
               const std::optional<std::filesystem::path>& csv_path);

const char* code_version();

}  // namespace iad
