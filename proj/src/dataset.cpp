#include "iad/dataset.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "iad/errors.hpp"
#include "iad/rng.hpp"

namespace iad {

Dataset::Dataset(std::string name, Matrix features, std::optional<std::vector<int>> labels,
                 Provenance provenance)
    : name_(std::move(name)),
      x_(std::move(features)),
      labels_(std::move(labels)),
      provenance_(std::move(provenance)) {
  if (x_.rows() < 2) throw ConfigError("a dataset needs at least two samples");
  if (!x_.all_finite()) throw ConfigError("dataset features must be finite");
  if (labels_) {
    if (labels_->size() != x_.rows()) throw ConfigError("label count does not match row count");
    for (int l : *labels_) {
      if (l != 0 && l != 1) throw ConfigError("labels must be 0 or 1");
    }
  }
}

std::size_t Dataset::anomaly_count() const {
  if (!labels_) return 0;
  std::size_t k = 0;
  for (int l : *labels_) k += static_cast<std::size_t>(l);
  return k;
}

const std::vector<int>& evaluation_labels(const Dataset& ds) {
  if (!ds.labels_) throw UsageError("dataset '" + ds.name_ + "' has no evaluation labels");
  return *ds.labels_;
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::optional<double> parse_number(std::string_view s) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

}  // namespace

Dataset load_csv(const std::filesystem::path& path, const LabelColumn& label) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open " + path.string());

  std::vector<std::string> header;
  std::vector<double> values;
  std::vector<int> labels;
  std::size_t cols = 0;
  std::size_t label_col = std::string::npos;
  std::size_t rows = 0;
  std::size_t line_no = 0;
  bool first = true;
  std::string line;

  auto where = [&](std::size_t col) {
    return path.string() + ": line " + std::to_string(line_no) + ", column " +
           std::to_string(col + 1);
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split(line);
    if (first) {
      first = false;
      bool numeric = true;
      for (auto c : cells) numeric = numeric && parse_number(c).has_value();
      cols = cells.size();
      if (label.name) {
        if (numeric) throw LoadError(path.string() + ": label column named but file has no header");
        for (std::size_t j = 0; j < cells.size(); ++j) {
          if (cells[j] == *label.name) label_col = j;
        }
        if (label_col == std::string::npos) {
          throw LoadError(path.string() + ": no column named '" + *label.name + "'");
        }
      } else if (label.index) {
        if (*label.index >= cols) throw LoadError(path.string() + ": label column out of range");
        label_col = *label.index;
      }
      if (!numeric) {
        for (auto c : cells) header.emplace_back(c);
        continue;
      }
    }
    if (cells.size() != cols) {
      throw LoadError(path.string() + ": line " + std::to_string(line_no) + " has " +
                      std::to_string(cells.size()) + " fields, expected " + std::to_string(cols));
    }
    for (std::size_t j = 0; j < cells.size(); ++j) {
      const auto v = parse_number(cells[j]);
      if (!v) throw LoadError(where(j) + ": non-numeric value '" + std::string(cells[j]) + "'");
      if (!std::isfinite(*v)) throw LoadError(where(j) + ": non-finite value");
      if (j == label_col) {
        if (*v != 0.0 && *v != 1.0) throw LoadError(where(j) + ": label must be 0 or 1");
        labels.push_back(static_cast<int>(*v));
      } else {
        values.push_back(*v);
      }
    }
    ++rows;
  }
  if (rows < 2) throw LoadError(path.string() + ": fewer than two data rows");

  const std::size_t d = label_col == std::string::npos ? cols : cols - 1;
  Provenance prov{path.string(), {"load_csv rows=" + std::to_string(rows) +
                                  " features=" + std::to_string(d) +
                                  (label_col == std::string::npos
                                       ? std::string(" unlabeled")
                                       : " label_column=" + std::to_string(label_col))}};
  std::optional<std::vector<int>> lab;
  if (label_col != std::string::npos) lab = std::move(labels);
  return Dataset(path.stem().string(), Matrix(rows, d, std::move(values)), std::move(lab),
                 std::move(prov));
}

Standardized standardize(const Dataset& ds) {
  const Matrix& x = ds.features();
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  std::vector<double> mean(d, 0.0);
  std::vector<double> sd(d, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < d; ++j) mean[j] += x(r, j);
  }
  for (double& m : mean) m /= static_cast<double>(n);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < d; ++j) sd[j] += (x(r, j) - mean[j]) * (x(r, j) - mean[j]);
  }
  std::vector<bool> constant(d, true);
  for (std::size_t r = 1; r < n; ++r) {
    for (std::size_t j = 0; j < d; ++j) {
      if (x(r, j) != x(0, j)) constant[j] = false;
    }
  }
  for (std::size_t j = 0; j < d; ++j) {
    sd[j] = constant[j] ? 1.0 : std::sqrt(sd[j] / static_cast<double>(n));
  }
  Matrix z(n, d);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < d; ++j) {
      z(r, j) = constant[j] ? 0.0 : (x(r, j) - mean[j]) / sd[j];
    }
  }
  Provenance prov = ds.provenance();
  prov.steps.push_back("standardize population-std");
  std::optional<std::vector<int>> labels;
  if (ds.has_labels()) labels = evaluation_labels(ds);
  return {Dataset(ds.name(), std::move(z), std::move(labels), std::move(prov)), std::move(mean),
          std::move(sd)};
}

nlohmann::json ScenarioManifest::to_json() const {
  return {{"requested_contamination", requested}, {"realized_contamination", realized},
          {"seed", seed},                         {"normals", normals},
          {"anomalies", anomalies},               {"available_anomalies", available_anomalies}};
}

Scenario build_scenario(const Dataset& ds, const ScenarioSpec& spec) {
  if (!ds.has_labels()) throw ConfigError("building a contamination scenario requires labels");
  if (!(spec.contamination >= 0.0 && spec.contamination < 1.0)) {
    throw ConfigError("contamination must lie in [0, 1)");
  }
  const auto& labels = evaluation_labels(ds);
  std::vector<std::size_t> normals;
  std::vector<std::size_t> anomalies;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    (labels[i] == 0 ? normals : anomalies).push_back(i);
  }
  std::size_t k = 0;
  if (spec.contamination > 0.0) {
    const double exact = spec.contamination * static_cast<double>(normals.size()) /
                         (1.0 - spec.contamination);
    k = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(exact)));
  }
  if (k > anomalies.size()) {
    throw ConfigError("contamination " + std::to_string(spec.contamination) + " needs " +
                      std::to_string(k) + " anomalies but only " +
                      std::to_string(anomalies.size()) + " are available");
  }
  RngStream rng(spec.seed, 0x5CE7A210);
  rng.shuffle(anomalies);
  std::vector<std::size_t> keep = normals;
  keep.insert(keep.end(), anomalies.begin(), anomalies.begin() + static_cast<std::ptrdiff_t>(k));
  rng.shuffle(keep);

  std::vector<int> new_labels(keep.size());
  for (std::size_t i = 0; i < keep.size(); ++i) new_labels[i] = labels[keep[i]];
  ScenarioManifest manifest{spec.contamination,
                            static_cast<double>(k) / static_cast<double>(keep.size()),
                            spec.seed,
                            normals.size(),
                            k,
                            anomalies.size()};
  Provenance prov = ds.provenance();
  prov.steps.push_back("scenario contamination=" + std::to_string(manifest.realized) +
                       " seed=" + std::to_string(spec.seed));
  return {Dataset(ds.name(), ds.features().gather_rows(keep), std::move(new_labels),
                  std::move(prov)),
          manifest};
}

Dataset synth_two_gaussian(std::size_t n, std::size_t d, double contamination, double separation,
                           std::uint64_t seed) {
  if (!(contamination >= 0.0 && contamination < 1.0)) {
    throw ConfigError("contamination must lie in [0, 1)");
  }
  if (!(separation > 0.0)) throw ConfigError("separation must be positive");
  if (d == 0) throw ConfigError("dimension must be positive");
  const auto anomalies =
      static_cast<std::size_t>(std::llround(contamination * static_cast<double>(n)));
  RngStream rng(seed, 0x5E17);
  Matrix x(n, d);
  std::vector<int> labels(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const bool anomalous = i < anomalies;
    labels[i] = anomalous ? 1 : 0;
    for (std::size_t j = 0; j < d; ++j) x(i, j) = rng.normal() + (anomalous ? separation : 0.0);
  }
  const auto perm = rng.permutation(n);
  std::vector<int> shuffled(n);
  for (std::size_t i = 0; i < n; ++i) shuffled[i] = labels[perm[i]];
  std::ostringstream src;
  src << "synthetic:two-gaussian n=" << n << " d=" << d << " contamination=" << contamination
      << " separation=" << separation << " seed=" << seed;
  return Dataset("two-gaussian", x.gather_rows(perm), std::move(shuffled),
                 Provenance{src.str(), {}});
}

}  // namespace iad
