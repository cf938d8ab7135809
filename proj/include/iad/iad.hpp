#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "iad/detector.hpp"
#include "iad/matrix.hpp"
#include "iad/optimizer.hpp"
#include "iad/rng.hpp"

namespace iad {

struct ScoreStats {
  double min = 0.0;
  double median = 0.0;
  double max = 0.0;
};

/// Median is the midpoint average for even n.
ScoreStats score_stats(std::span<const double> scores);

struct WeightUpdate {
  std::vector<double> weights;
  double alpha = 0.0;
  double beta = 0.0;
  /// Set when one median gap was zero (the other one was used) or both were
  /// zero (all weights 0.5).
  bool degenerate = false;
  bool constant_scores = false;
};

/// Importance weights w_i = 1 / (1 + exp(alpha (s_i - beta))) with
/// beta = median and alpha = 1 / (min(med - min, max - med) * tau).
WeightUpdate update_weights(std::span<const double> scores, double tau);

/// 1-based ranks in ascending score order; ties go to the lower sample index.
std::vector<std::size_t> rank_scores(std::span<const double> scores);

/// ceil(p * n), the rank that splits the low- and high-score partitions.
std::size_t partition_pivot(std::size_t n, double p);

/// Number of samples whose rank crossed the pivot between two rounds. A sample
/// sitting exactly on the pivot in either round never counts.
std::size_t termination_value(std::span<const std::size_t> ranks_now,
                              std::span<const std::size_t> ranks_prev, double p = 0.5);

struct Criterion {
  enum class Kind { kRankCross, kFixedRound, kLastRound, kOtsu };
  Kind kind = Kind::kRankCross;
  std::size_t round = 5;  ///< kFixedRound only

  static Criterion rank_cross() { return {}; }
  static Criterion fixed_round(std::size_t k) { return {Kind::kFixedRound, k}; }
  static Criterion last_round() { return {Kind::kLastRound, 0}; }
  static Criterion otsu() { return {Kind::kOtsu, 0}; }

  /// rankcross | fixed:K (or fixedK) | last | otsu
  static Criterion parse(std::string_view name);
  std::string name() const;

  friend bool operator==(const Criterion&, const Criterion&) = default;
};

struct IadConfig {
  std::size_t rounds = 15;  ///< T; rounds t = 0..T are run
  std::size_t epochs = 2;   ///< E per round
  double inv_tau = 4.0;     ///< 1 / tau
  double partition = 0.5;   ///< p
  bool warm_start = false;  ///< false: fresh parameters every round
  Criterion criterion;
  std::size_t batch_size = 128;
  AdamConfig optimizer;

  double tau() const { return 1.0 / inv_tau; }
  void validate() const;
};

struct RoundRecord {
  std::size_t t = 0;
  ScoreVector scores;
  ScoreStats stats;
  std::vector<double> weights_used;
  /// Weights produced from this round's scores for round t + 1.
  WeightUpdate next_weights;
  std::vector<std::size_t> ranks;
  std::optional<std::size_t> h;  ///< defined for t >= 1
  double train_loss = 0.0;       ///< mean batch loss of the last epoch
  std::shared_ptr<const Scorer> checkpoint;
  std::optional<double> auc;  ///< filled by evaluation code only
};

struct IadResult {
  std::vector<RoundRecord> history;
  std::size_t selected_round = 0;
  std::shared_ptr<const Scorer> selected;
  bool aborted = false;
  std::string abort_reason;
  std::vector<std::string> warnings;

  const RoundRecord& selected_record() const { return history.at(selected_round); }
};

/// Round index chosen by `criterion`. Selection is over t >= 1 except when
/// only round 0 exists. Ties resolve to the earliest round.
std::size_t select_round(std::span<const RoundRecord> history, const Criterion& criterion);

/// Something that can be trained for a round under given weights and scored.
class RoundModel {
 public:
  virtual ~RoundModel() = default;
  virtual void initialize(std::size_t round) = 0;
  /// Trains `epochs` passes; returns the last epoch's mean loss.
  virtual double train(std::span<const double> weights, std::size_t epochs) = 0;
  virtual ScoreVector scores() const = 0;
  virtual std::shared_ptr<const Scorer> snapshot() const = 0;
};

/// Outer loop shared by single-model and ensemble IAD.
IadResult drive_rounds(RoundModel& model, std::size_t n, const IadConfig& config);

/// Iterative anomaly detection on the feature matrix `x`. `detector` is
/// re-initialized from `rng` and trained in place; the returned checkpoint is
/// the snapshot of the selected round.
IadResult run_iad(const Matrix& x, Detector& detector, const IadConfig& config,
                  const RngStream& rng);

struct EnsembleConfig {
  std::size_t members = 5;
  double subsample = 0.8;
  /// Give every member the same random streams (testing and ablation).
  bool same_member_streams = false;

  void validate() const;
};

/// Median-normalized average of member scores. A member whose median is zero
/// is scaled by its mean instead (or left unscaled when that is zero too).
class EnsembleScorer final : public Scorer {
 public:
  EnsembleScorer(std::vector<std::shared_ptr<const Detector>> members, std::vector<double> scales);

  const std::vector<double>& scales() const noexcept { return scales_; }
  std::size_t size() const noexcept { return members_.size(); }

  ScoreVector score_all(const Matrix& x) const override;
  nlohmann::json to_json() const override;

 private:
  std::vector<std::shared_ptr<const Detector>> members_;
  std::vector<double> scales_;
};

struct ScaleChoice {
  double scale = 1.0;
  bool fallback = false;
};
/// Median of `scores`, or the mean when the median is zero.
ScaleChoice member_scale(std::span<const double> scores);

/// Mean of member_scores[m][i] / scales[m].
ScoreVector aggregate_scores(std::span<const ScoreVector> member_scores,
                             std::span<const double> scales);

using DetectorFactory = std::function<std::unique_ptr<Detector>()>;

IadResult run_ensemble_iad(const Matrix& x, const DetectorFactory& factory,
                           const EnsembleConfig& ensemble, const IadConfig& config,
                           const RngStream& rng);

}  // namespace iad
