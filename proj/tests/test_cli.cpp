#include <cstdlib>
#include <algorithm>
#include <sys/wait.h>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "doctest.h"
#include "iad/errors.hpp"
#include "iad/experiment.hpp"

using namespace iad;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kWork = fs::temp_directory_path() / "iad_test_cli";

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(IAD_CLI_PATH) + " " + args + " > " +
                          (kWork / "last_output.txt").string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path small_config(const std::string& name, const json& extra = json::object()) {
  fs::create_directories(kWork);
  json j = {{"data", {{"synthetic", {{"n", 300}, {"d", 4}}}}},
            {"detector", {{"hidden", {8, 3}}}},
            {"iad", {{"rounds", 4}, {"epochs", 3}}}};
  j.merge_patch(extra);
  const fs::path p = kWork / (name + ".json");
  std::ofstream(p) << j.dump(2);
  return p;
}

fs::path fresh(const std::string& name) {
  const fs::path p = kWork / name;
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("shipped defaults file matches built-in defaults") {
  const json shipped = json::parse(slurp(fs::path(IAD_SOURCE_DIR) / "configs" / "defaults.json"));
  CHECK(shipped == RunConfig{}.to_json());
  CHECK(load_run_config(fs::path(IAD_SOURCE_DIR) / "configs" / "defaults.json").to_json() ==
        RunConfig{}.to_json());
}

TEST_CASE("resolved config round-trips through JSON") {
  RunConfig c;
  c.seeds = {3, 4};
  c.detector.kind = DetectorKind::kMaf;
  c.iad.criterion = Criterion::fixed_round(5);
  c.iad.inv_tau = 9;
  c.data.contamination = 0.05;
  c.data.label = LabelColumn::by_name("y");
  c.ensemble = EnsembleConfig{};
  const RunConfig back = RunConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
  CHECK_THROWS_AS(RunConfig::from_json(json{{"iad", {{"criterion", "nope"}}}}), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json(json{{"seeds", "x"}}), ConfigError);
}

TEST_CASE("train: one seed writes a self-describing directory") {
  const fs::path out = fresh("one");
  REQUIRE(run_cli("train --config " + small_config("one").string() + " --seed 1 --out " +
                  out.string()) == 0);
  for (const char* f : {"history.csv", "report.json", "checkpoint.json", "config.json"}) {
    CHECK(fs::exists(out / "seed_1" / f));
  }
  CHECK(fs::exists(out / "config.json"));
  CHECK(fs::exists(out / "aggregate.json"));
  const json cfg = json::parse(slurp(out / "seed_1" / "config.json"));
  CHECK(cfg["code_version"] == code_version());
  CHECK(cfg["seeds"] == json::array({1}));
  CHECK(cfg["iad"]["rounds"] == 4);

  const json report = json::parse(slurp(out / "seed_1" / "report.json"));
  CHECK(report.contains("base_auc"));
  CHECK(report["h_series"].size() == 5);

  auto det = load_detector(json::parse(slurp(out / "seed_1" / "checkpoint.json")));
  const RunConfig rc = RunConfig::from_json(cfg);
  const PreparedData prep = prepare_data(rc.data, 1);
  const SeedRun run = run_seed(rc, 1);
  CHECK(det->score_all(prep.data.features()) == run.result.selected_record().scores);

  // Reproduce from the snapshot alone.
  const fs::path again = fresh("one_again");
  REQUIRE(run_cli("train --config " + (out / "seed_1" / "config.json").string() + " --out " +
                  again.string()) == 0);
  CHECK(slurp(again / "seed_1" / "history.csv") == slurp(out / "seed_1" / "history.csv"));
  CHECK(slurp(again / "seed_1" / "report.json") == slurp(out / "seed_1" / "report.json"));
}

TEST_CASE("train: repeated runs are byte-identical, including with parallel workers") {
  const fs::path a = fresh("rep_a"), b = fresh("rep_b");
  const std::string cfg = small_config("rep").string();
  REQUIRE(run_cli("train --config " + cfg + " -s 2 -s 3 --detector svdd-oc --out " + a.string()) == 0);
  REQUIRE(run_cli("train --config " + cfg + " -s 3 -s 2 --detector svdd-oc --out " + b.string()) == 0);
  setenv("IAD_MAX_WORKERS", "2", 1);
  const fs::path c = fresh("rep_c");
  REQUIRE(run_cli("train --config " + cfg + " -s 2 -s 3 --detector svdd-oc --out " + c.string()) == 0);
  unsetenv("IAD_MAX_WORKERS");
  for (const char* s : {"seed_2", "seed_3"}) {
    for (const char* f : {"history.csv", "report.json", "checkpoint.json"}) {
      CHECK(slurp(a / s / f) == slurp(b / s / f));
      CHECK(slurp(a / s / f) == slurp(c / s / f));
    }
  }
}

TEST_CASE("train: several seeds give an aggregate with mean and std") {
  const fs::path out = fresh("multi");
  REQUIRE(run_cli("train --config " + small_config("multi").string() +
                  " -s 0 -s 1 -s 2 --out " + out.string()) == 0);
  const json agg = json::parse(slurp(out / "aggregate.json"));
  CHECK(agg["seeds"] == 3);
  CHECK(agg["iad_auc"]["values"].size() == 3);
  CHECK(agg["iad_auc"].contains("std"));
  CHECK(agg["pgr"].contains("rankcross"));
  CHECK(fs::is_directory(out / "seed_0"));
  CHECK(fs::is_directory(out / "seed_2"));
}

TEST_CASE("train: invalid configuration exits with 1") {
  const std::string cfg = small_config("bad").string();
  CHECK(run_cli("train --config " + cfg + " --inv-tau -1 --out " + fresh("bad1").string()) == 1);
  CHECK(run_cli("train --config " + cfg + " --detector ocsvm --out " + fresh("bad2").string()) == 1);
  CHECK(run_cli("train --config " + cfg + " --criterion best --out " + fresh("bad3").string()) == 1);
  CHECK(run_cli("train --config " + cfg + " --contamination 1.5 --out " + fresh("bad4").string()) == 1);
  CHECK(run_cli("train --config /nonexistent.json") == 1);
  CHECK(run_cli("train --config " + cfg + " --rounds") == 1);
  CHECK(run_cli("frobnicate") == 1);
  const fs::path csv = kWork / "lab.csv";
  std::ofstream(csv) << "a,b,y\n1,2,0\n3,4,0\n5,6,1\n";
  CHECK(run_cli("train --data " + csv.string() + " --label-column y --contamination 0.9 --out " +
                fresh("bad5").string()) == 1);
}

TEST_CASE("train: numeric abort exits with 2 and keeps partial outputs") {
  const fs::path out = fresh("abort");
  const fs::path csv = kWork / "huge.csv";
  {
    std::ofstream f(csv);
    for (int i = 0; i < 50; ++i) f << (i % 7) * 1e200 << ',' << i << '\n';
  }
  const int rc = run_cli("train --data " + csv.string() + " --no-standardize --rounds 2 --epochs 1 --out " +
                         out.string());
  CHECK(rc == 2);
  if (fs::exists(out / "seed_0" / "report.json")) {
    const json r = json::parse(slurp(out / "seed_0" / "report.json"));
    CHECK(r["aborted"] == true);
  }
}

TEST_CASE("train: CSV input with a label column and contamination scenario") {
  const fs::path csv = kWork / "input.csv";
  {
    std::ofstream f(csv);
    f << "x1,x2,x3,label\n";
    RngStream rng(3);
    for (int i = 0; i < 400; ++i) {
      const bool anomaly = i < 60;
      for (int j = 0; j < 3; ++j) f << rng.normal() + (anomaly ? 4.0 : 0.0) << ',';
      f << (anomaly ? 1 : 0) << '\n';
    }
  }
  const fs::path out = fresh("csv");
  REQUIRE(run_cli("train --config " + small_config("csv").string() + " --data " + csv.string() +
                  " --label-column label --contamination 0.05 --out " + out.string()) == 0);
  const json r = json::parse(slurp(out / "seed_0" / "report.json"));
  CHECK(r["n"] == 340 + 18);
  CHECK(r["d"] == 3);
  CHECK(r["scenario"]["anomalies"] == 18);
  CHECK(r["dataset"] == "input");
}

TEST_CASE("sweep: tau axis gives one row per value and composes with report") {
  const fs::path out = fresh("sweep");
  REQUIRE(run_cli("sweep --config " + small_config("sweep").string() +
                  " -s 0 -s 1 --axis tau --values 4,9,16,25 --out " + out.string()) == 0);
  const std::string csv = slurp(out / "sweep.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
  for (const char* v : {"inv_tau_4", "inv_tau_9", "inv_tau_16", "inv_tau_25"}) {
    CHECK(fs::exists(out / v / "aggregate.json"));
  }

  const fs::path report_csv = kWork / "merged.csv";
  REQUIRE(run_cli("report " + (out / "inv_tau_4").string() + " " + (out / "inv_tau_9").string() +
                  " " + (out / "inv_tau_16").string() + " " + (out / "inv_tau_25").string() +
                  " --csv " + report_csv.string()) == 0);
  // Same numbers from both paths: compare everything after the first three columns.
  auto tails = [](const std::string& text, std::size_t skip) {
    std::vector<std::string> rows;
    std::istringstream in(text);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      std::size_t pos = 0;
      for (std::size_t k = 0; k < skip; ++k) pos = line.find(',', pos) + 1;
      rows.push_back(line.substr(pos));
    }
    return rows;
  };
  CHECK(tails(csv, 2) == tails(slurp(report_csv), 3));
}

TEST_CASE("sweep: criterion and contamination axes") {
  const fs::path out = fresh("sweep_crit");
  REQUIRE(run_cli("sweep --config " + small_config("sc").string() +
                  " --axis criterion --values rankcross,fixed:5,last,otsu --out " + out.string()) == 0);
  CHECK(fs::exists(out / "criterion_fixed_5" / "seed_0" / "report.json"));
  const json r = json::parse(slurp(out / "criterion_otsu" / "seed_0" / "report.json"));
  CHECK(r["criterion"] == "otsu");

  const fs::path out2 = fresh("sweep_rho");
  REQUIRE(run_cli("sweep --config " + small_config("sr").string() +
                  " --axis contamination --values 0.2,0.05 --out " + out2.string()) == 0);
  const json r2 = json::parse(slurp(out2 / "contamination_0.05" / "seed_0" / "report.json"));
  CHECK(r2["n"] == 300);
  CHECK(run_cli("sweep --config " + small_config("sr").string() +
                " --axis gamma --values 1 --out " + fresh("x").string()) == 1);
  CHECK(run_cli("sweep --config " + small_config("sr").string() +
                " --axis contamination --values 1.2 --out " + fresh("x").string()) == 1);
}

TEST_CASE("report: missing directories are listed and the rest reported") {
  const fs::path out = fresh("rep_ok");
  REQUIRE(run_cli("train --config " + small_config("rep_ok").string() + " --out " + out.string()) == 0);
  const fs::path corrupt = fresh("rep_corrupt");
  fs::create_directories(corrupt / "seed_0");
  std::ofstream(corrupt / "seed_0" / "report.json") << "{not json";
  const int rc = run_cli("report " + out.string() + " " + (kWork / "does_not_exist").string() +
                         " " + corrupt.string());
  CHECK(rc == 2);
  const std::string text = slurp(kWork / "last_output.txt");
  CHECK(text.find("rep_ok") != std::string::npos);
  CHECK(text.find("±") != std::string::npos);
  CHECK(text.find("missing or corrupt: " + (kWork / "does_not_exist").string()) != std::string::npos);
  CHECK(text.find("missing or corrupt: " + corrupt.string()) != std::string::npos);
}
