// Acceptance checks, one line per criterion. Exit status is nonzero if any
// criterion fails; criteria needing external data print NOT RUN when absent.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "iad/deep_svdd.hpp"
#include "iad/detector.hpp"
#include "iad/experiment.hpp"
#include "iad/grad_check.hpp"
#include "iad/iad.hpp"
#include "iad/maf.hpp"
#include "iad/metrics.hpp"
#include "iad/optimizer.hpp"
#include "oracles.hpp"

using namespace iad;
namespace fs = std::filesystem;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void report(int id, bool pass, const std::string& detail) {
  if (!pass) ++failures;
  std::printf("criterion %d: %s  %s\n", id, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
}

void not_run(int id, const std::string& why) {
  std::printf("criterion %d: NOT RUN  %s\n", id, why.c_str());
  std::fflush(stdout);
}

void info(const std::string& s) {
  std::printf("  info: %s\n", s.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

Matrix random_matrix(RngStream& rng, std::size_t r, std::size_t c) {
  Matrix m(r, c);
  for (double& v : m.values()) v = rng.normal();
  return m;
}

double mean(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

std::vector<json> read_reports(const fs::path& run_dir) {
  std::vector<std::pair<std::uint64_t, json>> found;
  for (const auto& e : fs::directory_iterator(run_dir)) {
    const std::string name = e.path().filename().string();
    if (!e.is_directory() || name.rfind("seed_", 0) != 0) continue;
    std::ifstream in(e.path() / "report.json");
    found.emplace_back(std::stoull(name.substr(5)), json::parse(in));
  }
  std::sort(found.begin(), found.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<json> out;
  for (auto& f : found) out.push_back(std::move(f.second));
  return out;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path work_root() {
  static const fs::path root = [] {
    fs::path r = fs::temp_directory_path() / "iad_acceptance";
    fs::remove_all(r);
    fs::create_directories(r);
    return r;
  }();
  return root;
}

// ---------------------------------------------------------------------------

void criterion_1() {
  const auto t0 = Clock::now();
  RngStream rng(2024);
  double worst = 0.0;
  int instances = 0;
  for (auto kind : {DetectorKind::kSvddOneClass, DetectorKind::kSvddSoftBoundary,
                    DetectorKind::kAutoencoder, DetectorKind::kMaf}) {
    double worst_kind = 0.0;
    for (int trial = 0; trial < 25; ++trial) {
      const std::size_t n = 2 + rng.below(31);
      const std::size_t d = 1 + rng.below(10);
      const Matrix x = random_matrix(rng, n, d);
      DetectorConfig cfg;
      cfg.kind = kind;
      cfg.hidden = {6, 3};
      cfg.flow_blocks = 3;
      cfg.flow_hidden = 8;
      auto det = make_detector(cfg, d);
      det->reset(rng, x);
      if (kind == DetectorKind::kSvddSoftBoundary) {
        // radius in the widest gap between sample distances, away from the hinge
        auto& s = dynamic_cast<DeepSvdd&>(*det);
        auto sorted = s.score_all(x);
        std::sort(sorted.begin(), sorted.end());
        std::size_t k = 1;
        for (std::size_t i = 2; i < n; ++i) {
          if (sorted[i] - sorted[i - 1] > sorted[k] - sorted[k - 1]) k = i;
        }
        s.set_radius_sq(0.5 * (sorted[k - 1] + sorted[k]));
      }
      std::vector<double> w(n);
      for (double& v : w) v = rng.uniform();
      const auto params = det->params();
      const double err = grad_check(
          params, [&] { return det->weighted_loss(x, w); },
          [&] { det->accumulate_gradients(x, w); });
      worst_kind = std::max(worst_kind, err);
      ++instances;
    }
    info(fmt("%s max relative error %.3g", std::string(to_string(kind)).c_str(), worst_kind));
    worst = std::max(worst, worst_kind);
  }
  const double secs = seconds_since(t0);
  report(1, worst < 1e-4 && secs < 60.0,
         fmt("%d instances, max rel err %.3g (< 1e-4), %.1fs (< 60s)", instances, worst, secs));
}

void criterion_2() {
  RngStream rng(7);
  double worst = 0.0;
  bool monotone = true;
  bool affine = true;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 3 + rng.below(298);
    const double scale = std::exp(rng.uniform(-4.0, 4.0));
    std::vector<double> s(n);
    for (double& v : s) v = trial % 2 ? scale * rng.normal() : scale * std::exp(rng.normal());
    const double inv_tau = rng.uniform(0.25, 16.0);
    const auto got = update_weights(s, 1.0 / inv_tau).weights;
    const auto ref = oracle::weights(s, inv_tau);
    for (std::size_t i = 0; i < n; ++i) worst = std::max(worst, std::abs(got[i] - ref[i]));

    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return s[a] < s[b]; });
    for (std::size_t k = 1; k < n; ++k) {
      const double lo = got[idx[k - 1]], hi = got[idx[k]];
      if (s[idx[k - 1]] == s[idx[k]]) {
        monotone &= lo == hi;
      } else {
        // equal weights are only allowed where the sigmoid has saturated
        monotone &= lo > hi || (lo == hi && (lo == 1.0 || lo == 0.0));
      }
    }

    const double a = std::exp(rng.uniform(-3.0, 3.0));
    const double b = rng.uniform(-100.0, 100.0);
    std::vector<double> t(n);
    for (std::size_t i = 0; i < n; ++i) t[i] = a * s[i] + b;
    const auto moved = update_weights(t, 1.0 / inv_tau).weights;
    for (std::size_t i = 0; i < n; ++i) affine &= std::abs(moved[i] - got[i]) < 1e-9;
  }
  report(2, worst <= 1e-12 && monotone && affine,
         fmt("1000 vectors, max |w - oracle| %.3g (<= 1e-12), monotone %s, affine-invariant %s",
             worst, monotone ? "yes" : "no", affine ? "yes" : "no"));
}

void criterion_3() {
  RngStream rng(11);
  int mismatches = 0;
  bool identical_zero = true;
  std::size_t max_h = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.below(200);
    std::vector<std::size_t> prev(n);
    std::iota(prev.begin(), prev.end(), 1);
    rng.shuffle(prev);
    std::vector<std::size_t> now = prev;
    const std::size_t swaps = rng.below(n + 1);
    for (std::size_t k = 0; k < swaps; ++k) std::swap(now[rng.below(n)], now[rng.below(n)]);
    const double p = trial % 3 == 0 ? 0.5 : rng.uniform(0.01, 0.99);
    const std::size_t h = termination_value(now, prev, p);
    if (h != oracle::crossings(now, prev, p)) ++mismatches;
    identical_zero &= termination_value(prev, prev, p) == 0;
    max_h = std::max(max_h, h);
  }
  // n = 10, pivot 5: moving onto or off the pivot never counts
  const std::vector<std::size_t> before{5, 10, 1, 2, 3, 4, 6, 7, 8, 9};
  const std::vector<std::size_t> after{10, 5, 1, 2, 3, 4, 6, 7, 8, 9};
  const std::vector<std::size_t> crossed{5, 1, 10, 2, 3, 4, 6, 7, 8, 9};
  const bool pivot_ok = partition_pivot(10, 0.5) == 5 && termination_value(after, before) == 0 &&
                        termination_value(crossed, before) == 2;
  report(3, mismatches == 0 && identical_zero && pivot_ok,
         fmt("1000 instances, %d mismatches (max h %zu), identical ranks h=0 %s, pivot excluded %s",
             mismatches, max_h, identical_zero ? "yes" : "no", pivot_ok ? "yes" : "no"));
}

void criterion_4() {
  RngStream rng(13);
  double worst = 0.0;
  int with_ties = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 2 + rng.below(99);
    const std::uint64_t levels = 2 + rng.below(trial % 2 ? 5 : 1000);
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng.below(levels)) * 0.37;
      y[i] = rng.uniform() < 0.3 ? 1 : 0;
    }
    y[0] = 1;
    y[1] = 0;
    std::vector<double> sorted = s;
    std::sort(sorted.begin(), sorted.end());
    with_ties += std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end();
    worst = std::max(worst, std::abs(auc(s, y) - oracle::pairwise_auc(s, y)));
  }
  report(4, worst <= 1e-12,
         fmt("500 instances (%d with ties), max |auc - pairwise| %.3g (<= 1e-12)", with_ties, worst));
}

void criterion_5() {
  const auto t0 = Clock::now();
  RngStream rng(17);
  const std::size_t n = 500;
  Matrix x(n, 2);
  for (std::size_t i = 0; i < n; ++i) {
    const double z1 = rng.normal(), z2 = rng.normal();
    x(i, 0) = z1;
    x(i, 1) = 0.8 * z1 + 0.6 * z2;
  }
  DetectorConfig cfg;
  cfg.kind = DetectorKind::kMaf;
  Maf maf(cfg, 2);
  RngStream init = rng.derive(1);
  maf.reset(init, x);
  Adam opt(AdamConfig{.learning_rate = 1e-3});
  RngStream shuffle = rng.derive(2);
  const std::vector<double> w(n, 1.0);
  const double nll_before = mean(maf.sample_losses(x));
  for (int e = 0; e < 300; ++e) train_epoch(maf, x, w, opt, shuffle, 128);
  const double nll_after = mean(maf.sample_losses(x));

  const std::size_t g = 601;
  const auto axis = linspace(-6.0, 6.0, g);
  Matrix grid(g * g, 2);
  for (std::size_t i = 0; i < g; ++i) {
    for (std::size_t j = 0; j < g; ++j) {
      grid(i * g + j, 0) = axis[i];
      grid(i * g + j, 1) = axis[j];
    }
  }
  const auto lp = maf.log_prob(grid);
  std::vector<double> inner(g);
  std::vector<double> row(g);
  for (std::size_t i = 0; i < g; ++i) {
    for (std::size_t j = 0; j < g; ++j) row[j] = std::exp(lp[i * g + j]);
    inner[i] = trapezoid(axis, row);
  }
  const double integral = trapezoid(axis, inner);

  // autoregressive structure of every trained block, and the flow's log-det
  bool masked = true;
  double logdet_err = 0.0;
  const double h = 1e-6;
  for (int trial = 0; trial < 20; ++trial) {
    Matrix pt(1, 2);
    pt(0, 0) = 2.0 * rng.normal();
    pt(0, 1) = 2.0 * rng.normal();
    auto jacobian = [&](const std::function<Matrix(const Matrix&)>& f) {
      Matrix jac(2, 2);
      for (std::size_t j = 0; j < 2; ++j) {
        Matrix a = pt, b = pt;
        a(0, j) += h;
        b(0, j) -= h;
        const Matrix fa = f(a), fb = f(b);
        for (std::size_t i = 0; i < 2; ++i) jac(i, j) = (fa(0, i) - fb(0, i)) / (2 * h);
      }
      return jac;
    };
    for (const auto& block : maf.blocks()) {
      const Matrix jac = jacobian([&](const Matrix& v) { return block.inverse(v).u; });
      const auto& ord = block.order();
      masked &= jac(ord[0], ord[1]) == 0.0 && jac(ord[0], ord[0]) != 0.0 &&
                jac(ord[1], ord[1]) != 0.0;
    }
    const Matrix jac = jacobian([&](const Matrix& v) { return maf.to_base(v); });
    const double fd = std::log(std::abs(jac(0, 0) * jac(1, 1) - jac(0, 1) * jac(1, 0)));
    const double analytic =
        maf.log_prob(pt)[0] - standard_normal_log_density(maf.to_base(pt).row(0));
    logdet_err = std::max(logdet_err, std::abs(fd - analytic));
  }
  const double secs = seconds_since(t0);
  info(fmt("flow nll %.4f -> %.4f (true entropy %.4f)", nll_before, nll_after,
           1.0 + std::log(2.0 * 3.141592653589793) + 0.5 * std::log(0.36)));
  report(5, std::abs(integral - 1.0) <= 1e-2 && masked && logdet_err < 1e-5 && secs < 120.0,
         fmt("grid integral %.5f (1 +- 1e-2), masks verified %s, log-det fd err %.2g, %.1fs (< 120s)",
             integral, masked ? "yes" : "no", logdet_err, secs));
}

// ---------------------------------------------------------------------------

RunConfig seeded(RunConfig c, std::uint64_t first, std::size_t count) {
  c.seeds.clear();
  for (std::size_t s = 0; s < count; ++s) c.seeds.push_back(first + s);
  return c;
}

void criterion_6() {
  const char* dir = std::getenv("IAD_ODDS_DIR");
  if (!dir) {
    not_run(6, "IAD_ODDS_DIR not set (expects satimage-2.csv and thyroid.csv with a 'label' column)");
    return;
  }
  const fs::path base(dir);
  struct Case {
    const char* file;
    DetectorKind kind;
    double min_gain;
    double min_iad;
  };
  const Case cases[] = {{"satimage-2.csv", DetectorKind::kSvddOneClass, 0.03, 0.90},
                        {"thyroid.csv", DetectorKind::kAutoencoder, 0.01, 0.0}};
  bool pass = true;
  std::string detail;
  for (const auto& c : cases) {
    if (!fs::exists(base / c.file)) {
      not_run(6, fmt("%s missing from IAD_ODDS_DIR", c.file));
      return;
    }
  }
  for (const auto& c : cases) {
    const auto t0 = Clock::now();
    RunConfig cfg;
    cfg.data.path = base / c.file;
    cfg.data.label = LabelColumn::by_name("label");
    cfg.detector.kind = c.kind;
    cfg.output_dir = work_root() / (std::string("odds_") + c.file);
    cfg = seeded(cfg, 0, 10);
    std::ostringstream log;
    if (cmd_train(cfg, log) != kExitOk) {
      pass = false;
      detail += fmt("%s: run failed; ", c.file);
      continue;
    }
    const Aggregate a = collect_run(cfg.output_dir);
    const double b = mean(a.base_auc), i = mean(a.iad_auc);
    const bool ok = i - b >= c.min_gain && i >= c.min_iad;
    pass &= ok;
    detail += fmt("%s %s base %.3f iad %.3f gain %+.3f (>= %.2f%s) %.0fs; ", c.file,
                  std::string(to_string(c.kind)).c_str(), b, i, i - b, c.min_gain,
                  c.min_iad > 0 ? ", iad >= 0.90" : "", seconds_since(t0));
  }
  report(6, pass, detail);
}

struct DetectorSweep {
  DetectorKind kind;
  std::map<std::string, std::vector<json>> by_criterion;
};

DetectorSweep run_criterion_sweep(DetectorKind kind) {
  RunConfig cfg;
  cfg.detector.kind = kind;
  cfg.output_dir = work_root() / ("synthetic_" + std::string(to_string(kind)));
  cfg = seeded(cfg, 0, 10);
  std::ostringstream log;
  const int rc = cmd_sweep(cfg, SweepAxis::kCriterion, {"rankcross", "fixed:5", "last", "otsu"}, log);
  if (rc != kExitOk) throw std::runtime_error("criterion sweep failed: " + log.str());
  DetectorSweep out{kind, {}};
  for (const auto& e : fs::directory_iterator(cfg.output_dir)) {
    if (!e.is_directory()) continue;
    auto reports = read_reports(e.path());
    if (reports.empty()) continue;
    out.by_criterion[reports.front()["criterion"].get<std::string>()] = std::move(reports);
  }
  return out;
}

void criterion_7(const std::vector<DetectorSweep>& sweeps) {
  bool pass = true;
  std::string detail;
  for (const auto& sw : sweeps) {
    const auto& reps = sw.by_criterion.at("rankcross");
    int ge = 0;
    std::vector<double> base, iad, best;
    for (const auto& r : reps) {
      base.push_back(r["base_auc"]);
      iad.push_back(r["iad_auc"]);
      best.push_back(r["best_auc"]);
      ge += iad.back() >= base.back();
    }
    const bool ok = ge >= 8 && mean(best) > mean(base);
    pass &= ok;
    detail += fmt("%s IAD>=Base %d/%zu, base %.3f iad %.3f best %.3f; ",
                  std::string(to_string(sw.kind)).c_str(), ge, reps.size(), mean(base), mean(iad),
                  mean(best));
  }
  report(7, pass, detail + "(need >= 8/10 and best > base)");
}

void criterion_8(const std::vector<DetectorSweep>& sweeps) {
  bool pass = true;
  std::string detail;
  for (const auto& sw : sweeps) {
    const auto& reps = sw.by_criterion.at("rankcross");
    int both = 0, gap_ok = 0, bimodal = 0;
    double min_gap = 1.0;
    for (const auto& r : reps) {
      const std::size_t k = r["selected_round"];
      const auto& traj = r["weight_trajectory"];
      const double gap =
          traj["normal_mean"][k].get<double>() - traj["anomaly_mean"][k].get<double>();
      const bool two = r["weight_kde"][k]["modes"].get<int>() == 2;
      min_gap = std::min(min_gap, gap);
      gap_ok += gap >= 0.3;
      bimodal += two;
      both += gap >= 0.3 && two;
    }
    pass &= both >= 7;
    detail += fmt("%s gap>=0.3 and bimodal %d/%zu (gap %d, bimodal %d, min gap %.3f); ",
                  std::string(to_string(sw.kind)).c_str(), both, reps.size(), gap_ok, bimodal,
                  min_gap);
    if (gap_ok != static_cast<int>(reps.size())) {
      info(fmt("%s: gap >= 0.3 does not hold in every seed", std::string(to_string(sw.kind)).c_str()));
    }
  }
  report(8, pass, detail + "(need >= 7/10 per detector)");
}

void criterion_9(const std::vector<DetectorSweep>& sweeps) {
  std::map<std::string, std::vector<double>> pooled;
  for (const auto& sw : sweeps) {
    std::string per;
    for (const auto& [name, reps] : sw.by_criterion) {
      std::vector<double> v;
      for (const auto& r : reps) {
        if (!r["pgr"].is_null()) v.push_back(r["pgr"]);
      }
      per += fmt(" %s %.1f (%zu seeds)", name.c_str(), mean(v), v.size());
      pooled[name].insert(pooled[name].end(), v.begin(), v.end());
    }
    info(fmt("%s mean PGR:%s", std::string(to_string(sw.kind)).c_str(), per.c_str()));
  }
  const double rc = mean(pooled["rankcross"]);
  const double f5 = mean(pooled["fixed:5"]);
  const double last = mean(pooled["last"]);
  const double otsu = mean(pooled["otsu"]);
  report(9, rc >= f5 && rc >= last,
         fmt("pooled mean PGR rankcross %.1f, fixed:5 %.1f, last %.1f, otsu %.1f "
             "(need rankcross >= fixed:5 and >= last)",
             rc, f5, last, otsu));
}

void warm_start_ablation() {
  for (auto kind : {DetectorKind::kAutoencoder, DetectorKind::kSvddOneClass}) {
    RunConfig cfg;
    cfg.detector.kind = kind;
    cfg.iad.warm_start = true;
    cfg.iad.epochs = 10;
    cfg.output_dir = work_root() / ("warm_" + std::string(to_string(kind)));
    cfg = seeded(cfg, 0, 10);
    std::ostringstream log;
    if (cmd_train(cfg, log) != kExitOk) continue;
    int ge = 0;
    for (const auto& r : read_reports(cfg.output_dir)) {
      ge += r["iad_auc"].get<double>() >= r["base_auc"].get<double>();
    }
    const Aggregate a = collect_run(cfg.output_dir);
    info(fmt("ablation warm start, E=10, %s: IAD>=Base %d/10, base %.3f iad %.3f best %.3f",
             std::string(to_string(kind)).c_str(), ge, mean(a.base_auc), mean(a.iad_auc),
             mean(a.best_auc)));
  }
}

void criterion_10() {
  struct Case {
    const char* name;
    std::function<void(RunConfig&)> apply;
  };
  const std::vector<Case> cases{
      {"ae", [](RunConfig& c) { c.detector.kind = DetectorKind::kAutoencoder; }},
      {"svdd-oc", [](RunConfig& c) { c.detector.kind = DetectorKind::kSvddOneClass; }},
      {"svdd-sb", [](RunConfig& c) { c.detector.kind = DetectorKind::kSvddSoftBoundary; }},
      {"maf", [](RunConfig& c) { c.detector.kind = DetectorKind::kMaf; }},
      {"ae-warm-otsu",
       [](RunConfig& c) {
         c.iad.warm_start = true;
         c.iad.criterion = Criterion::otsu();
       }},
      {"ensemble", [](RunConfig& c) { c.ensemble = EnsembleConfig{3, 0.7}; }},
  };
  int identical = 0;
  std::string mismatched;
  for (const auto& cs : cases) {
    RunConfig cfg;
    cfg.data.synth_n = 400;
    cfg.data.synth_d = 6;
    cfg.iad.rounds = 6;
    cfg.seeds = {3, 4};
    cs.apply(cfg);
    std::ostringstream log;
    const fs::path a = work_root() / "determinism" / cs.name / "a";
    const fs::path b = work_root() / "determinism" / cs.name / "b";
    cfg.output_dir = a;
    const int ra = cmd_train(cfg, log);
    cfg.output_dir = b;
    const int rb = cmd_train(cfg, log);
    bool same = ra == kExitOk && rb == kExitOk;
    for (auto seed : cfg.seeds) {
      for (const char* f : {"history.csv", "report.json"}) {
        const fs::path rel = fs::path("seed_" + std::to_string(seed)) / f;
        same &= fs::exists(a / rel) && slurp(a / rel) == slurp(b / rel);
      }
    }
    identical += same;
    if (!same) mismatched += std::string(" ") + cs.name;
  }
  report(10, identical == static_cast<int>(cases.size()),
         fmt("%d/%zu configs byte-identical across repeats (history.csv, report.json)%s%s",
             identical, cases.size(), mismatched.empty() ? "" : "; differing:",
             mismatched.c_str()));
}

template <typename F>
void guarded(int id, F&& f) {
  try {
    f();
  } catch (const std::exception& e) {
    report(id, false, std::string("exception: ") + e.what());
  }
}

}  // namespace

int main() {
  const auto t0 = Clock::now();
  guarded(1, criterion_1);
  guarded(2, criterion_2);
  guarded(3, criterion_3);
  guarded(4, criterion_4);
  guarded(5, criterion_5);
  guarded(6, criterion_6);

  std::vector<DetectorSweep> sweeps;
  try {
    sweeps.push_back(run_criterion_sweep(DetectorKind::kAutoencoder));
    sweeps.push_back(run_criterion_sweep(DetectorKind::kSvddOneClass));
  } catch (const std::exception& e) {
    for (int id : {7, 8, 9}) report(id, false, std::string("exception: ") + e.what());
  }
  if (sweeps.size() == 2) {
    guarded(7, [&] { criterion_7(sweeps); });
    guarded(8, [&] { criterion_8(sweeps); });
    guarded(9, [&] { criterion_9(sweeps); });
  }
  warm_start_ablation();
  guarded(10, criterion_10);

  std::printf("acceptance: %s (%.0fs)\n", failures == 0 ? "all run criteria passed" : "FAILED",
              seconds_since(t0));
  return failures == 0 ? 0 : 1;
}
