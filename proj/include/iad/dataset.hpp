#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "iad/matrix.hpp"

namespace iad {

struct Provenance {
  std::string source;
  std::vector<std::string> steps;
};

/// Feature matrix plus optional ground-truth labels (0 normal, 1 anomaly).
///
/// Training code receives only features(); labels are reachable solely via
/// evaluation_labels(), which evaluation and reporting code uses.
class Dataset {
 public:
  Dataset(std::string name, Matrix features, std::optional<std::vector<int>> labels,
          Provenance provenance);

  const std::string& name() const noexcept { return name_; }
  const Matrix& features() const noexcept { return x_; }
  std::size_t n() const noexcept { return x_.rows(); }
  std::size_t d() const noexcept { return x_.cols(); }
  bool has_labels() const noexcept { return labels_.has_value(); }
  std::size_t anomaly_count() const;
  const Provenance& provenance() const noexcept { return provenance_; }

  friend const std::vector<int>& evaluation_labels(const Dataset& ds);

 private:
  std::string name_;
  Matrix x_;
  std::optional<std::vector<int>> labels_;
  Provenance provenance_;
};

/// Throws UsageError when the dataset carries no labels.
const std::vector<int>& evaluation_labels(const Dataset& ds);

/// Which CSV column holds labels, if any.
struct LabelColumn {
  std::optional<std::string> name;
  std::optional<std::size_t> index;

  static LabelColumn none() { return {}; }
  static LabelColumn by_name(std::string n) { return {std::move(n), std::nullopt}; }
  static LabelColumn by_index(std::size_t i) { return {std::nullopt, i}; }
  bool present() const noexcept { return name || index; }
};

/// Comma-separated numeric file with an optional single header line. A first
/// line containing any non-numeric cell is taken as the header.
Dataset load_csv(const std::filesystem::path& path, const LabelColumn& label = LabelColumn::none());

struct Standardized {
  Dataset data;
  std::vector<double> mean;
  std::vector<double> std;  ///< population std; 1 for constant features
};

/// Per-feature zero mean and unit population variance.
Standardized standardize(const Dataset& ds);

struct ScenarioSpec {
  double contamination = 0.0;  ///< target anomaly fraction in [0, 1)
  std::uint64_t seed = 0;
};

struct ScenarioManifest {
  double requested = 0.0;
  double realized = 0.0;
  std::uint64_t seed = 0;
  std::size_t normals = 0;
  std::size_t anomalies = 0;
  std::size_t available_anomalies = 0;

  nlohmann::json to_json() const;
};

struct Scenario {
  Dataset data;
  ScenarioManifest manifest;
};

/// Keeps every normal sample and subsamples anomalies without replacement to
/// the count round(rho * normals / (1 - rho)) (at least 1 when rho > 0).
Scenario build_scenario(const Dataset& ds, const ScenarioSpec& spec);

/// Normals ~ N(0, I_d), anomalies ~ N(separation * 1, I_d), rows shuffled.
Dataset synth_two_gaussian(std::size_t n, std::size_t d, double contamination, double separation,
                           std::uint64_t seed);

}  // namespace iad
