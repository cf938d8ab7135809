#include "iad/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "iad/errors.hpp"
#include "iad/metrics.hpp"

#ifndef IAD_CODE_VERSION
#define IAD_CODE_VERSION "unknown"
#endif

namespace iad {

namespace fs = std::filesystem;
using nlohmann::json;

const char* code_version() { return IAD_CODE_VERSION; }

void RunConfig::validate() const {
  detector.validate();
  iad.validate();
  if (seeds.empty()) throw ConfigError("at least one seed is required");
  if (ensemble) ensemble->validate();
  if (data.contamination && !(*data.contamination >= 0.0 && *data.contamination < 1.0)) {
    throw ConfigError("contamination must lie in [0, 1)");
  }
  if (!data.path) {
    if (data.synth_n < 2 || data.synth_d < 1) throw ConfigError("synthetic n >= 2 and d >= 1");
    if (!(data.synth_separation > 0.0)) throw ConfigError("synthetic separation must be > 0");
    if (!(data.synth_contamination >= 0.0 && data.synth_contamination < 1.0)) {
      throw ConfigError("synthetic contamination must lie in [0, 1)");
    }
  }
  if (output_dir.empty()) throw ConfigError("output directory is required");
}

json RunConfig::to_json() const {
  json label = nullptr;
  if (data.label.name) label = *data.label.name;
  if (data.label.index) label = *data.label.index;
  json j;
  j["data"] = {{"path", data.path ? json(data.path->string()) : json(nullptr)},
               {"label_column", label},
               {"contamination", data.contamination ? json(*data.contamination) : json(nullptr)},
               {"standardize", data.standardize},
               {"data_seed", data.data_seed ? json(*data.data_seed) : json(nullptr)},
               {"synthetic",
                {{"n", data.synth_n},
                 {"d", data.synth_d},
                 {"separation", data.synth_separation},
                 {"contamination", data.synth_contamination}}}};
  j["detector"] = detector.to_json();
  j["iad"] = {{"rounds", iad.rounds},
              {"epochs", iad.epochs},
              {"inv_tau", iad.inv_tau},
              {"partition", iad.partition},
              {"warm_start", iad.warm_start},
              {"criterion", iad.criterion.name()},
              {"batch_size", iad.batch_size},
              {"optimizer",
               {{"learning_rate", iad.optimizer.learning_rate},
                {"beta1", iad.optimizer.beta1},
                {"beta2", iad.optimizer.beta2},
                {"epsilon", iad.optimizer.epsilon},
                {"weight_decay", iad.optimizer.weight_decay}}}};
  j["seeds"] = seeds;
  j["output_dir"] = output_dir.string();
  j["ensemble"] = ensemble ? json{{"members", ensemble->members},
                                  {"subsample", ensemble->subsample}}
                           : json(nullptr);
  return j;
}

RunConfig RunConfig::from_json(const json& j, const RunConfig& base) {
  RunConfig c = base;
  try {
    if (j.contains("data")) {
      const json& d = j.at("data");
      if (d.contains("path")) {
        c.data.path = d.at("path").is_null() ? std::nullopt
                                             : std::optional<fs::path>(d.at("path").get<std::string>());
      }
      if (d.contains("label_column")) {
        const json& l = d.at("label_column");
        if (l.is_null()) c.data.label = LabelColumn::none();
        else if (l.is_string()) c.data.label = LabelColumn::by_name(l.get<std::string>());
        else c.data.label = LabelColumn::by_index(l.get<std::size_t>());
      }
      if (d.contains("contamination")) {
        c.data.contamination = d.at("contamination").is_null()
                                   ? std::nullopt
                                   : std::optional<double>(d.at("contamination").get<double>());
      }
      c.data.standardize = d.value("standardize", c.data.standardize);
      if (d.contains("data_seed")) {
        c.data.data_seed = d.at("data_seed").is_null()
                               ? std::nullopt
                               : std::optional<std::uint64_t>(d.at("data_seed").get<std::uint64_t>());
      }
      if (d.contains("synthetic")) {
        const json& s = d.at("synthetic");
        c.data.synth_n = s.value("n", c.data.synth_n);
        c.data.synth_d = s.value("d", c.data.synth_d);
        c.data.synth_separation = s.value("separation", c.data.synth_separation);
        c.data.synth_contamination = s.value("contamination", c.data.synth_contamination);
      }
    }
    if (j.contains("detector")) {
      json merged = c.detector.to_json();
      merged.merge_patch(j.at("detector"));
      c.detector = DetectorConfig::from_json(merged);
    }
    if (j.contains("iad")) {
      const json& i = j.at("iad");
      c.iad.rounds = i.value("rounds", c.iad.rounds);
      c.iad.epochs = i.value("epochs", c.iad.epochs);
      c.iad.inv_tau = i.value("inv_tau", c.iad.inv_tau);
      c.iad.partition = i.value("partition", c.iad.partition);
      c.iad.warm_start = i.value("warm_start", c.iad.warm_start);
      if (i.contains("criterion")) c.iad.criterion = Criterion::parse(i.at("criterion").get<std::string>());
      c.iad.batch_size = i.value("batch_size", c.iad.batch_size);
      if (i.contains("optimizer")) {
        const json& o = i.at("optimizer");
        c.iad.optimizer.learning_rate = o.value("learning_rate", c.iad.optimizer.learning_rate);
        c.iad.optimizer.beta1 = o.value("beta1", c.iad.optimizer.beta1);
        c.iad.optimizer.beta2 = o.value("beta2", c.iad.optimizer.beta2);
        c.iad.optimizer.epsilon = o.value("epsilon", c.iad.optimizer.epsilon);
        c.iad.optimizer.weight_decay = o.value("weight_decay", c.iad.optimizer.weight_decay);
      }
    }
    if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
    if (j.contains("ensemble")) {
      const json& e = j.at("ensemble");
      if (e.is_null()) {
        c.ensemble.reset();
      } else {
        EnsembleConfig ec = c.ensemble.value_or(EnsembleConfig{});
        ec.members = e.value("members", ec.members);
        ec.subsample = e.value("subsample", ec.subsample);
        c.ensemble = ec;
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed run config: ") + e.what());
  }
  return c;
}

RunConfig RunConfig::from_json(const json& j) { return from_json(j, RunConfig{}); }

RunConfig load_run_config(const fs::path& path) { return load_run_config(path, RunConfig{}); }

RunConfig load_run_config(const fs::path& path, const RunConfig& base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return RunConfig::from_json(j, base);
}

PreparedData prepare_data(const DataSource& source, std::uint64_t seed) {
  const std::uint64_t data_seed = source.data_seed.value_or(seed);
  std::optional<ScenarioManifest> manifest;
  Dataset ds = [&] {
    if (!source.path) {
      return synth_two_gaussian(source.synth_n, source.synth_d,
                                source.contamination.value_or(source.synth_contamination),
                                source.synth_separation, data_seed);
    }
    Dataset loaded = load_csv(*source.path, source.label);
    if (!source.contamination) return loaded;
    Scenario sc = build_scenario(loaded, ScenarioSpec{*source.contamination, data_seed});
    manifest = sc.manifest;
    return std::move(sc.data);
  }();
  if (source.standardize) ds = standardize(ds).data;
  return PreparedData{std::move(ds), manifest};
}

namespace {

const std::vector<int>* usable_labels(const Dataset& ds) {
  if (!ds.has_labels()) return nullptr;
  const std::size_t k = ds.anomaly_count();
  if (k == 0 || k == ds.n()) return nullptr;
  return &evaluation_labels(ds);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::string seed_dir_name(std::uint64_t seed) { return "seed_" + std::to_string(seed); }

}  // namespace

SeedRun run_seed(const RunConfig& config, std::uint64_t seed) {
  SeedRun run;
  run.seed = seed;
  run.prepared = prepare_data(config.data, seed);
  const Matrix& x = run.prepared->data.features();
  const RngStream rng(seed, 0);
  if (config.ensemble) {
    const DetectorConfig dc = config.detector;
    const std::size_t d = x.cols();
    run.result = run_ensemble_iad(
        x, [dc, d] { return make_detector(dc, d); }, *config.ensemble, config.iad, rng);
  } else {
    auto detector = make_detector(config.detector, x.cols());
    run.result = run_iad(x, *detector, config.iad, rng);
  }
  run.report = build_report(run.result, config.iad.criterion, usable_labels(run.prepared->data));
  return run;
}

void write_seed_outputs(const SeedRun& run, const RunConfig& config, const fs::path& dir) {
  fs::create_directories(dir);
  const Dataset& ds = run.prepared->data;
  write_text(dir / "history.csv", history_csv(run.result, usable_labels(ds)));

  json report = run.report.to_json();
  report["seed"] = run.seed;
  report["dataset"] = ds.name();
  report["detector"] = config.ensemble ? std::string(to_string(config.detector.kind)) + "-ensemble"
                                       : std::string(to_string(config.detector.kind));
  report["n"] = ds.n();
  report["d"] = ds.d();
  report["scenario"] = run.prepared->scenario ? run.prepared->scenario->to_json() : json(nullptr);
  report["warnings"] = run.result.warnings;
  write_text(dir / "report.json", report.dump(2) + "\n");

  if (run.result.selected) {
    json ckpt = run.result.selected->to_json();
    ckpt["selected_round"] = run.result.selected_round;
    write_text(dir / "checkpoint.json", ckpt.dump() + "\n");
  }

  json cfg = config.to_json();
  cfg["seeds"] = json::array({run.seed});
  cfg["code_version"] = code_version();
  cfg["provenance"] = {{"source", ds.provenance().source}, {"steps", ds.provenance().steps}};
  write_text(dir / "config.json", cfg.dump(2) + "\n");
}

json Aggregate::to_json() const {
  auto stats = [](const std::vector<double>& v) {
    const MeanStd ms = mean_std(v);
    return json{{"mean", ms.mean}, {"std", ms.std}, {"count", v.size()}, {"values", v}};
  };
  json j{{"dataset", dataset}, {"detector", detector}, {"seeds", seeds}, {"aborted", aborted}};
  if (!base_auc.empty()) {
    j["base_auc"] = stats(base_auc);
    j["iad_auc"] = stats(iad_auc);
    j["best_auc"] = stats(best_auc);
    json p = json::object();
    for (const auto& [name, values] : criterion_pgr) p[name] = stats(values);
    j["pgr"] = p;
  }
  return j;
}

Aggregate aggregate_reports(const std::vector<json>& reports, std::string dataset,
                            std::string detector) {
  Aggregate a;
  a.dataset = std::move(dataset);
  a.detector = std::move(detector);
  for (const auto& c : standard_criteria()) a.criterion_pgr.emplace_back(c.name(), std::vector<double>{});
  for (const auto& r : reports) {
    ++a.seeds;
    if (r.value("aborted", false)) ++a.aborted;
    if (!r.contains("base_auc")) continue;
    a.base_auc.push_back(r.at("base_auc").get<double>());
    a.iad_auc.push_back(r.at("iad_auc").get<double>());
    a.best_auc.push_back(r.at("best_auc").get<double>());
    for (const auto& c : r.at("criteria")) {
      if (!c.contains("pgr") || c.at("pgr").is_null()) continue;
      const auto name = c.at("criterion").get<std::string>();
      for (auto& [n, values] : a.criterion_pgr) {
        if (n == name) values.push_back(c.at("pgr").get<double>());
      }
    }
  }
  return a;
}

Aggregate collect_run(const fs::path& run_dir) {
  if (!fs::is_directory(run_dir)) throw LoadError(run_dir.string() + " is not a directory");
  std::vector<std::pair<std::uint64_t, fs::path>> seed_dirs;
  for (const auto& entry : fs::directory_iterator(run_dir)) {
    const std::string name = entry.path().filename().string();
    if (!entry.is_directory() || !name.starts_with("seed_")) continue;
    try {
      seed_dirs.emplace_back(std::stoull(name.substr(5)), entry.path());
    } catch (const std::exception&) {
      continue;
    }
  }
  std::sort(seed_dirs.begin(), seed_dirs.end());
  std::vector<json> reports;
  std::string dataset;
  std::string detector;
  for (const auto& [seed, dir] : seed_dirs) {
    std::ifstream in(dir / "report.json");
    if (!in) throw LoadError(dir.string() + ": missing report.json");
    json r;
    try {
      in >> r;
    } catch (const json::exception& e) {
      throw LoadError(dir.string() + ": corrupt report.json (" + e.what() + ")");
    }
    dataset = r.value("dataset", std::string("?"));
    detector = r.value("detector", std::string("?"));
    reports.push_back(std::move(r));
  }
  if (reports.empty()) throw LoadError(run_dir.string() + ": no seed reports found");
  return aggregate_reports(reports, dataset, detector);
}

std::size_t max_workers() {
  if (const char* v = std::getenv("IAD_MAX_WORKERS")) {
    try {
      const long k = std::stol(v);
      if (k >= 1) return static_cast<std::size_t>(k);
    } catch (const std::exception&) {
    }
  }
  return 1;
}

int cmd_train(const RunConfig& config, std::ostream& log) {
  try {
    config.validate();
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
  try {
    fs::create_directories(config.output_dir);
    json cfg = config.to_json();
    cfg["code_version"] = code_version();
    write_text(config.output_dir / "config.json", cfg.dump(2) + "\n");
  } catch (const std::exception& e) {
    log << "cannot prepare output directory: " << e.what() << '\n';
    return kExitRuntime;
  }

  std::mutex log_mutex;
  std::atomic<std::size_t> next{0};
  std::atomic<int> status{kExitOk};
  auto worker = [&] {
    for (std::size_t k = next++; k < config.seeds.size(); k = next++) {
      const std::uint64_t seed = config.seeds[k];
      try {
        SeedRun run = run_seed(config, seed);
        write_seed_outputs(run, config, config.output_dir / seed_dir_name(seed));
        std::lock_guard lock(log_mutex);
        log << "seed " << seed << ": selected round " << run.result.selected_round;
        if (run.report.base_auc) {
          log << std::fixed << std::setprecision(4) << "  base AUC " << *run.report.base_auc
              << "  IAD AUC " << *run.report.iad_auc << "  best AUC " << *run.report.best_auc;
          log.unsetf(std::ios::floatfield);
        }
        log << '\n';
        for (const auto& w : run.result.warnings) log << "  warning: " << w << '\n';
        if (run.result.aborted) {
          log << "  training aborted (" << run.result.abort_reason << "); outputs are partial\n";
          int expected = kExitOk;
          status.compare_exchange_strong(expected, kExitRuntime);
        }
      } catch (const ConfigError& e) {
        std::lock_guard lock(log_mutex);
        log << "seed " << seed << ": config error: " << e.what() << '\n';
        status = kExitConfig;
      } catch (const std::exception& e) {
        std::lock_guard lock(log_mutex);
        log << "seed " << seed << ": " << e.what() << '\n';
        int expected = kExitOk;
        status.compare_exchange_strong(expected, kExitRuntime);
      }
    }
  };
  const std::size_t workers = std::min(max_workers(), config.seeds.size());
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  }
  if (status != kExitOk && status != kExitRuntime) return status;

  try {
    const Aggregate agg = collect_run(config.output_dir);
    write_text(config.output_dir / "aggregate.json", agg.to_json().dump(2) + "\n");
  } catch (const std::exception& e) {
    log << "aggregation failed: " << e.what() << '\n';
    return kExitRuntime;
  }
  return status;
}

SweepAxis parse_sweep_axis(std::string_view name) {
  if (name == "contamination") return SweepAxis::kContamination;
  if (name == "tau" || name == "inv-tau") return SweepAxis::kTau;
  if (name == "criterion") return SweepAxis::kCriterion;
  throw ConfigError("unknown sweep axis '" + std::string(name) +
                    "' (expected contamination, tau or criterion)");
}

namespace {

std::string axis_name(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::kContamination:
      return "contamination";
    case SweepAxis::kTau:
      return "inv_tau";
    case SweepAxis::kCriterion:
      return "criterion";
  }
  return "axis";
}

double parse_double(const std::string& s) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || s.empty()) throw ConfigError("not a number: '" + s + "'");
  return v;
}

std::string safe_dir_component(std::string s) {
  for (char& c : s) {
    if (c == ':' || c == '/' || c == ' ') c = '_';
  }
  return s;
}

std::string csv_mean(const std::vector<double>& v) {
  return v.empty() ? std::string() : format_double(mean_std(v).mean);
}
std::string csv_std(const std::vector<double>& v) {
  return v.empty() ? std::string() : format_double(mean_std(v).std);
}

std::string pgr_column(const std::string& criterion) {
  std::string s = "pgr_";
  for (char c : criterion) {
    if (c != ':') s += c;
  }
  return s;
}

}  // namespace

int cmd_sweep(const RunConfig& config, SweepAxis axis, const std::vector<std::string>& values,
              std::ostream& log) {
  std::vector<RunConfig> points;
  try {
    if (values.empty()) throw ConfigError("a sweep needs at least one value");
    for (const auto& v : values) {
      RunConfig c = config;
      switch (axis) {
        case SweepAxis::kContamination: {
          const double rho = parse_double(v);
          if (!(rho >= 0.0 && rho < 1.0)) throw ConfigError("contamination must lie in [0, 1)");
          c.data.contamination = rho;
          break;
        }
        case SweepAxis::kTau: {
          const double inv_tau = parse_double(v);
          if (!(inv_tau > 0.0)) throw ConfigError("1/tau must be positive");
          c.iad.inv_tau = inv_tau;
          break;
        }
        case SweepAxis::kCriterion:
          c.iad.criterion = Criterion::parse(v);
          break;
      }
      c.output_dir = config.output_dir / (axis_name(axis) + "_" + safe_dir_component(v));
      c.validate();
      points.push_back(std::move(c));
    }
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << '\n';
    return kExitConfig;
  }

  int status = kExitOk;
  std::ostringstream csv;
  csv << "axis,value,seeds,base_auc_mean,base_auc_std,iad_auc_mean,iad_auc_std,best_auc_mean,"
         "best_auc_std";
  for (const auto& c : standard_criteria()) csv << ',' << pgr_column(c.name());
  csv << '\n';
  for (std::size_t k = 0; k < points.size(); ++k) {
    log << "== " << axis_name(axis) << " = " << values[k] << '\n';
    const int rc = cmd_train(points[k], log);
    if (rc == kExitConfig) return rc;
    if (rc != kExitOk) status = rc;
    try {
      const Aggregate a = collect_run(points[k].output_dir);
      csv << axis_name(axis) << ',' << values[k] << ',' << a.seeds << ',' << csv_mean(a.base_auc)
          << ',' << csv_std(a.base_auc) << ',' << csv_mean(a.iad_auc) << ','
          << csv_std(a.iad_auc) << ',' << csv_mean(a.best_auc) << ',' << csv_std(a.best_auc);
      for (const auto& [name, v] : a.criterion_pgr) csv << ',' << csv_mean(v);
      csv << '\n';
    } catch (const std::exception& e) {
      log << "cannot aggregate " << points[k].output_dir << ": " << e.what() << '\n';
      status = kExitRuntime;
    }
  }
  try {
    write_text(config.output_dir / "sweep.csv", csv.str());
  } catch (const std::exception& e) {
    log << e.what() << '\n';
    return kExitRuntime;
  }
  return status;
}

int cmd_report(const std::vector<fs::path>& run_dirs, std::ostream& out,
               const std::optional<fs::path>& csv_path) {
  std::vector<std::pair<fs::path, Aggregate>> rows;
  std::vector<std::pair<fs::path, std::string>> failures;
  for (const auto& dir : run_dirs) {
    try {
      rows.emplace_back(dir, collect_run(dir));
    } catch (const std::exception& e) {
      failures.emplace_back(dir, e.what());
    }
  }

  auto pct = [](const std::vector<double>& v) {
    if (v.empty()) return std::string("-");
    const MeanStd ms = mean_std(v);
    std::ostringstream s;
    s << std::fixed << std::setprecision(1) << 100.0 * ms.mean << "±" << 100.0 * ms.std;
    return s.str();
  };
  out << std::left << std::setw(28) << "run" << std::setw(16) << "dataset" << std::setw(16)
      << "detector" << std::setw(7) << "seeds" << std::setw(14) << "Base" << std::setw(14)
      << "IAD" << std::setw(14) << "IAD-Best" << '\n';
  for (const auto& [dir, a] : rows) {
    out << std::left << std::setw(28) << dir.filename().string() << std::setw(16) << a.dataset
        << std::setw(16) << a.detector << std::setw(7) << a.seeds << std::setw(14)
        << pct(a.base_auc) << std::setw(14) << pct(a.iad_auc) << std::setw(14) << pct(a.best_auc)
        << '\n';
  }
  for (const auto& [dir, why] : failures) out << "missing or corrupt: " << dir.string() << " (" << why << ")\n";

  if (csv_path) {
    std::ostringstream csv;
    csv << "run,dataset,detector,seeds,base_auc_mean,base_auc_std,iad_auc_mean,iad_auc_std,"
           "best_auc_mean,best_auc_std";
    for (const auto& c : standard_criteria()) csv << ',' << pgr_column(c.name());
    csv << '\n';
    for (const auto& [dir, a] : rows) {
      csv << dir.string() << ',' << a.dataset << ',' << a.detector << ',' << a.seeds << ','
          << csv_mean(a.base_auc) << ',' << csv_std(a.base_auc) << ',' << csv_mean(a.iad_auc)
          << ',' << csv_std(a.iad_auc) << ',' << csv_mean(a.best_auc) << ','
          << csv_std(a.best_auc);
      for (const auto& [name, v] : a.criterion_pgr) csv << ',' << csv_mean(v);
      csv << '\n';
    }
    try {
      write_text(*csv_path, csv.str());
    } catch (const std::exception& e) {
      out << e.what() << '\n';
      return kExitRuntime;
    }
  }
  return failures.empty() ? kExitOk : kExitRuntime;
}

}  // namespace iad
