#include "iad/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include "iad/deep_svdd.hpp"
#include "iad/errors.hpp"
#include "iad/metrics.hpp"

namespace iad {

using nlohmann::json;

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) return "nan";
  return std::string(buf, ptr);
}

namespace {

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

WeightTrajectory weight_trajectory(std::span<const RoundRecord> history,
                                   std::span<const int> labels) {
  WeightTrajectory out;
  for (const auto& rec : history) {
    if (rec.weights_used.size() != labels.size()) {
      throw ConfigError("label count does not match weight count");
    }
    std::vector<double> normal;
    std::vector<double> anomaly;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      (labels[i] == 1 ? anomaly : normal).push_back(rec.weights_used[i]);
    }
    out.normal_mean.push_back(mean_of(normal));
    out.normal_median.push_back(median_of(normal));
    out.anomaly_mean.push_back(mean_of(anomaly));
    out.anomaly_median.push_back(median_of(anomaly));
  }
  return out;
}

void annotate_auc(std::vector<RoundRecord>& history, std::span<const int> labels) {
  for (auto& rec : history) rec.auc = auc(rec.scores, labels);
}

KdeSummary summarize_weight_kde(std::span<const double> weights) {
  const auto grid = linspace(-0.25, 1.25, 601);
  const KdeEstimate est = weight_kde(weights, grid);
  KdeSummary s;
  s.degenerate = est.degenerate;
  s.spike_at = est.spike_at;
  s.bandwidth = est.bandwidth;
  s.modes = est.degenerate ? 1 : count_local_maxima(est.density);
  return s;
}

std::vector<Criterion> standard_criteria() {
  return {Criterion::rank_cross(), Criterion::fixed_round(5), Criterion::last_round(),
          Criterion::otsu()};
}

EvalReport build_report(IadResult& result, const Criterion& criterion,
                        const std::vector<int>* labels) {
  EvalReport r;
  r.criterion = criterion.name();
  r.rounds_completed = result.history.size();
  r.aborted = result.aborted;
  r.abort_reason = result.abort_reason;
  if (result.history.empty()) return r;
  r.selected_round = select_round(result.history, criterion);
  for (const auto& rec : result.history) {
    r.h_series.push_back(rec.h);
    r.weight_kde.push_back(summarize_weight_kde(rec.weights_used));
  }

  if (labels) {
    annotate_auc(result.history, *labels);
    for (const auto& rec : result.history) r.auc_series.push_back(*rec.auc);
    r.base_auc = r.auc_series.front();
    r.iad_auc = r.auc_series[r.selected_round];
    const auto best = std::max_element(r.auc_series.begin(), r.auc_series.end());
    r.best_auc = *best;
    r.best_round = static_cast<std::size_t>(best - r.auc_series.begin());
    if (*r.best_auc != *r.base_auc) r.pgr = pgr(*r.base_auc, *r.iad_auc, *r.best_auc);
    r.weights = weight_trajectory(result.history, *labels);
  }

  for (const auto& c : standard_criteria()) {
    CriterionOutcome o;
    o.criterion = c.name();
    o.round = select_round(result.history, c);
    if (labels) {
      o.auc = r.auc_series[o.round];
      if (*r.best_auc != *r.base_auc) o.pgr = pgr(*r.base_auc, *o.auc, *r.best_auc);
    }
    r.criteria.push_back(std::move(o));
  }
  return r;
}

namespace {

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

json EvalReport::to_json() const {
  json j;
  j["schema"] = 1;
  j["criterion"] = criterion;
  j["selected_round"] = selected_round;
  j["rounds_completed"] = rounds_completed;
  j["aborted"] = aborted;
  if (aborted) j["abort_reason"] = abort_reason;
  json h = json::array();
  for (const auto& v : h_series) h.push_back(v ? json(*v) : json(nullptr));
  j["h_series"] = h;
  if (base_auc) {
    j["base_auc"] = *base_auc;
    j["iad_auc"] = *iad_auc;
    j["best_auc"] = *best_auc;
    j["best_round"] = *best_round;
    j["pgr"] = optional_json(pgr);
    j["auc_series"] = auc_series;
  }
  if (weights) {
    j["weight_trajectory"] = {{"normal_mean", weights->normal_mean},
                              {"normal_median", weights->normal_median},
                              {"anomaly_mean", weights->anomaly_mean},
                              {"anomaly_median", weights->anomaly_median}};
  }
  json kde = json::array();
  for (const auto& k : weight_kde) {
    json e{{"degenerate", k.degenerate}, {"bandwidth", k.bandwidth}, {"modes", k.modes}};
    if (k.degenerate) e["spike_at"] = k.spike_at;
    kde.push_back(std::move(e));
  }
  j["weight_kde"] = kde;
  json crit = json::array();
  for (const auto& c : criteria) {
    json e{{"criterion", c.criterion}, {"round", c.round}};
    if (c.auc) {
      e["auc"] = *c.auc;
      e["pgr"] = optional_json(c.pgr);
    }
    crit.push_back(std::move(e));
  }
  j["criteria"] = crit;
  return j;
}

std::string history_csv(const IadResult& result, const std::vector<int>* labels) {
  std::ostringstream out;
  out << "t,h,score_min,score_median,score_max,weight_mean_normal,weight_mean_anomaly,auc\n";
  std::optional<WeightTrajectory> traj;
  if (labels) traj = weight_trajectory(result.history, *labels);
  for (std::size_t k = 0; k < result.history.size(); ++k) {
    const auto& rec = result.history[k];
    out << rec.t << ',';
    if (rec.h) out << *rec.h;
    out << ',' << format_double(rec.stats.min) << ',' << format_double(rec.stats.median) << ','
        << format_double(rec.stats.max) << ',';
    if (traj) {
      out << format_double(traj->normal_mean[k]) << ',' << format_double(traj->anomaly_mean[k]);
    } else {
      out << ',';
    }
    out << ',';
    if (labels) out << format_double(auc(rec.scores, *labels));
    out << '\n';
  }
  return out.str();
}

}  // namespace iad
