#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "iad/iad.hpp"

namespace iad {

/// Per-round mean and median of the weights used in training, split by true class.
struct WeightTrajectory {
  std::vector<double> normal_mean;
  std::vector<double> normal_median;
  std::vector<double> anomaly_mean;
  std::vector<double> anomaly_median;
};

WeightTrajectory weight_trajectory(std::span<const RoundRecord> history,
                                   std::span<const int> labels);

/// Fills RoundRecord::auc for every round.
void annotate_auc(std::vector<RoundRecord>& history, std::span<const int> labels);

struct KdeSummary {
  bool degenerate = false;
  double spike_at = 0.0;
  double bandwidth = 0.0;
  std::size_t modes = 0;
};

/// Weight KDE on a padded grid over [-0.25, 1.25]; `modes` counts local maxima.
KdeSummary summarize_weight_kde(std::span<const double> weights);

struct CriterionOutcome {
  std::string criterion;
  std::size_t round = 0;
  std::optional<double> auc;
  std::optional<double> pgr;
};

/// The criteria compared in reports: rankcross, fixed:5, last, otsu.
std::vector<Criterion> standard_criteria();

struct EvalReport {
  std::string criterion;
  std::size_t selected_round = 0;
  std::size_t rounds_completed = 0;
  bool aborted = false;
  std::string abort_reason;
  std::vector<std::optional<std::size_t>> h_series;

  // Present only with labels.
  std::optional<double> base_auc;
  std::optional<double> iad_auc;
  std::optional<double> best_auc;
  std::optional<std::size_t> best_round;
  std::optional<double> pgr;
  std::vector<double> auc_series;
  std::optional<WeightTrajectory> weights;

  std::vector<KdeSummary> weight_kde;
  std::vector<CriterionOutcome> criteria;

  nlohmann::json to_json() const;
};

/// `labels` may be null for unlabeled data. History AUCs are computed here
/// when labels are given.
EvalReport build_report(IadResult& result, const Criterion& criterion,
                        const std::vector<int>* labels);

/// One row per round: t,h,score_min,score_median,score_max,
/// weight_mean_normal,weight_mean_anomaly,auc. Unavailable cells are empty.
std::string history_csv(const IadResult& result, const std::vector<int>* labels);

/// Shortest round-trip decimal for a double.
std::string format_double(double v);

}  // namespace iad
