#include "iad/iad.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>

#include "iad/errors.hpp"
#include "iad/metrics.hpp"

namespace iad {

ScoreStats score_stats(std::span<const double> scores) {
  if (scores.empty()) throw UsageError("score statistics of an empty vector");
  std::vector<double> sorted(scores.begin(), scores.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  const double median =
      n % 2 == 1 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  return {sorted.front(), median, sorted.back()};
}

WeightUpdate update_weights(std::span<const double> scores, double tau) {
  if (scores.size() < 2) throw UsageError("weight update needs at least two scores");
  if (!(tau > 0.0)) throw ConfigError("temperature must be positive");
  const ScoreStats st = score_stats(scores);
  const double lower = st.median - st.min;
  const double upper = st.max - st.median;

  WeightUpdate out;
  out.beta = st.median;
  double gap = std::min(lower, upper);
  if (gap == 0.0) {
    out.degenerate = true;
    gap = std::max(lower, upper);
    if (gap == 0.0) {
      out.constant_scores = true;
      out.weights.assign(scores.size(), 0.5);
      return out;
    }
  }
  out.alpha = 1.0 / (gap * tau);
  out.weights.resize(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out.weights[i] = 1.0 / (1.0 + std::exp(out.alpha * (scores[i] - out.beta)));
  }
  return out;
}

std::vector<std::size_t> rank_scores(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::vector<std::size_t> ranks(scores.size());
  for (std::size_t pos = 0; pos < order.size(); ++pos) ranks[order[pos]] = pos + 1;
  return ranks;
}

std::size_t partition_pivot(std::size_t n, double p) {
  if (!(p > 0.0 && p < 1.0)) throw ConfigError("partition fraction must lie in (0, 1)");
  // Guard against p * n landing a rounding error above an integer.
  const double x = p * static_cast<double>(n);
  const double snapped = std::round(x);
  const double v = std::abs(x - snapped) < 1e-9 ? snapped : std::ceil(x);
  return static_cast<std::size_t>(v);
}

std::size_t termination_value(std::span<const std::size_t> ranks_now,
                              std::span<const std::size_t> ranks_prev, double p) {
  if (ranks_now.size() != ranks_prev.size()) {
    throw UsageError("rank vectors from consecutive rounds differ in length");
  }
  const std::size_t n = ranks_now.size();
  const std::size_t pivot = partition_pivot(n, p);
  std::size_t h = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t a = ranks_now[i];
    const std::size_t b = ranks_prev[i];
    if (a == 0 || a > n || b == 0 || b > n) throw UsageError("rank outside 1..n");
    if ((a < pivot && b > pivot) || (a > pivot && b < pivot)) ++h;
  }
  return h;
}

Criterion Criterion::parse(std::string_view name) {
  if (name == "rankcross" || name == "rank-cross" || name == "RankCross") return rank_cross();
  if (name == "last" || name == "LastRound" || name == "terminate-max") return last_round();
  if (name == "otsu" || name == "Otsu") return otsu();
  for (std::string_view prefix : {"fixed:", "fixed", "terminate-"}) {
    if (name.starts_with(prefix)) {
      const auto digits = name.substr(prefix.size());
      std::size_t k = 0;
      const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), k);
      if (ec == std::errc{} && ptr == digits.data() + digits.size() && !digits.empty()) {
        return fixed_round(k);
      }
    }
  }
  throw ConfigError("unknown criterion '" + std::string(name) +
                    "' (expected rankcross, fixed:K, last or otsu)");
}

std::string Criterion::name() const {
  switch (kind) {
    case Kind::kRankCross:
      return "rankcross";
    case Kind::kFixedRound:
      return "fixed:" + std::to_string(round);
    case Kind::kLastRound:
      return "last";
    case Kind::kOtsu:
      return "otsu";
  }
  return "unknown";
}

void IadConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs per round must be >= 1");
  if (!(inv_tau > 0.0) || !std::isfinite(inv_tau)) throw ConfigError("1/tau must be positive");
  if (!(partition > 0.0 && partition < 1.0)) throw ConfigError("partition must lie in (0, 1)");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
}

std::size_t select_round(std::span<const RoundRecord> history, const Criterion& criterion) {
  if (history.empty()) throw UsageError("cannot select a round from an empty history");
  const std::size_t last = history.size() - 1;
  if (last == 0) return 0;
  switch (criterion.kind) {
    case Criterion::Kind::kFixedRound:
      return std::min(criterion.round, last);
    case Criterion::Kind::kLastRound:
      return last;
    case Criterion::Kind::kRankCross: {
      std::size_t best = 1;
      for (std::size_t t = 2; t <= last; ++t) {
        if (!history[t].h) throw UsageError("round without a termination value");
        if (*history[t].h < *history[best].h) best = t;
      }
      return best;
    }
    case Criterion::Kind::kOtsu: {
      std::size_t best = 1;
      double best_value = otsu_separability(history[1].scores);
      for (std::size_t t = 2; t <= last; ++t) {
        const double v = otsu_separability(history[t].scores);
        if (v > best_value) {
          best = t;
          best_value = v;
        }
      }
      return best;
    }
  }
  return last;
}

IadResult drive_rounds(RoundModel& model, std::size_t n, const IadConfig& config) {
  config.validate();
  if (n < 2) throw ConfigError("IAD needs at least two samples");
  IadResult result;
  std::vector<double> weights(n, 1.0);
  model.initialize(0);
  for (std::size_t t = 0; t <= config.rounds; ++t) {
    if (t > 0 && !config.warm_start) model.initialize(t);
    RoundRecord rec;
    rec.t = t;
    rec.weights_used = weights;
    try {
      rec.train_loss = model.train(weights, config.epochs);
      rec.scores = model.scores();
      for (std::size_t i = 0; i < rec.scores.size(); ++i) {
        if (!std::isfinite(rec.scores[i])) {
          throw NumericError("non-finite anomaly score for sample " + std::to_string(i));
        }
      }
    } catch (const NumericError& e) {
      result.aborted = true;
      result.abort_reason = "round " + std::to_string(t) + ": " + e.what();
      break;
    }
    if (rec.scores.size() != n) throw UsageError("model returned the wrong number of scores");
    rec.stats = score_stats(rec.scores);
    rec.ranks = rank_scores(rec.scores);
    if (t >= 1) {
      rec.h = termination_value(rec.ranks, result.history.back().ranks, config.partition);
    }
    rec.next_weights = update_weights(rec.scores, config.tau());
    if (rec.next_weights.constant_scores) {
      result.warnings.push_back("round " + std::to_string(t) +
                                ": all scores equal, weights set to 0.5");
    } else if (rec.next_weights.degenerate) {
      result.warnings.push_back("round " + std::to_string(t) +
                                ": median coincides with an extreme score");
    }
    weights = rec.next_weights.weights;
    rec.checkpoint = model.snapshot();
    result.history.push_back(std::move(rec));
  }
  if (!result.history.empty()) {
    result.selected_round = select_round(result.history, config.criterion);
    result.selected = result.history[result.selected_round].checkpoint;
  }
  return result;
}

namespace {

constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kShuffleStream = 2;
constexpr std::uint64_t kReinitBase = 100;

class SingleDetectorModel final : public RoundModel {
 public:
  SingleDetectorModel(const Matrix& x, Detector& detector, const IadConfig& config,
                      const RngStream& rng)
      : x_(x),
        detector_(detector),
        optimizer_(config.optimizer),
        base_(rng),
        shuffle_(rng.derive(kShuffleStream)),
        batch_size_(config.batch_size) {}

  void initialize(std::size_t round) override {
    RngStream init = round == 0 ? base_.derive(kInitStream) : base_.derive(kReinitBase + round);
    detector_.reset(init, x_);
    optimizer_.reset();
  }

  double train(std::span<const double> weights, std::size_t epochs) override {
    double loss = 0.0;
    for (std::size_t e = 0; e < epochs; ++e) {
      loss = train_epoch(detector_, x_, weights, optimizer_, shuffle_, batch_size_);
    }
    return loss;
  }

  ScoreVector scores() const override { return detector_.score_all(x_); }

  std::shared_ptr<const Scorer> snapshot() const override {
    return std::shared_ptr<const Scorer>(detector_.clone());
  }

 private:
  const Matrix& x_;
  Detector& detector_;
  Adam optimizer_;
  RngStream base_;
  RngStream shuffle_;
  std::size_t batch_size_;
};

}  // namespace

IadResult run_iad(const Matrix& x, Detector& detector, const IadConfig& config,
                  const RngStream& rng) {
  if (x.cols() != detector.input_dim()) throw ConfigError("detector input width mismatch");
  SingleDetectorModel model(x, detector, config, rng);
  return drive_rounds(model, x.rows(), config);
}

void EnsembleConfig::validate() const {
  if (members < 2) throw ConfigError("an ensemble needs at least two members");
  if (!(subsample > 0.0 && subsample <= 1.0)) throw ConfigError("subsample must lie in (0, 1]");
}

EnsembleScorer::EnsembleScorer(std::vector<std::shared_ptr<const Detector>> members,
                               std::vector<double> scales)
    : members_(std::move(members)), scales_(std::move(scales)) {
  if (members_.size() != scales_.size() || members_.empty()) {
    throw ConfigError("ensemble needs one scale per member");
  }
}

ScoreVector EnsembleScorer::score_all(const Matrix& x) const {
  std::vector<ScoreVector> per_member;
  per_member.reserve(members_.size());
  for (const auto& m : members_) per_member.push_back(m->score_all(x));
  return aggregate_scores(per_member, scales_);
}

nlohmann::json EnsembleScorer::to_json() const {
  nlohmann::json members = nlohmann::json::array();
  for (const auto& m : members_) members.push_back(m->to_json());
  return {{"format", "iad-ensemble"}, {"version", 1}, {"scales", scales_}, {"members", members}};
}

ScaleChoice member_scale(std::span<const double> scores) {
  const ScoreStats st = score_stats(scores);
  if (st.median != 0.0) return {st.median, false};
  const double mean =
      std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(scores.size());
  return {mean != 0.0 ? mean : 1.0, true};
}

ScoreVector aggregate_scores(std::span<const ScoreVector> member_scores,
                             std::span<const double> scales) {
  if (member_scores.empty() || member_scores.size() != scales.size()) {
    throw ConfigError("aggregation needs one scale per member");
  }
  const std::size_t n = member_scores.front().size();
  ScoreVector out(n, 0.0);
  for (std::size_t m = 0; m < member_scores.size(); ++m) {
    if (member_scores[m].size() != n) throw ConfigError("members scored different sample counts");
    for (std::size_t i = 0; i < n; ++i) out[i] += member_scores[m][i] / scales[m];
  }
  for (double& v : out) v /= static_cast<double>(member_scores.size());
  return out;
}

namespace {

struct Member {
  std::unique_ptr<Detector> detector;
  Adam optimizer;
  RngStream base;
  RngStream shuffle;
  std::vector<std::size_t> indices;
  Matrix x;
};

class EnsembleModel final : public RoundModel {
 public:
  EnsembleModel(const Matrix& x, const DetectorFactory& factory, const EnsembleConfig& ensemble,
                const IadConfig& config, const RngStream& rng, std::vector<std::string>& warnings)
      : x_(x), batch_size_(config.batch_size), warnings_(warnings) {
    const std::size_t n = x.rows();
    const auto k = std::max<std::size_t>(
        2, std::min(n, static_cast<std::size_t>(std::llround(ensemble.subsample * n))));
    for (std::size_t m = 0; m < ensemble.members; ++m) {
      const RngStream member_rng = ensemble.same_member_streams ? rng : rng.derive(1000 + m);
      RngStream subset_rng = member_rng.derive(7);
      auto perm = subset_rng.permutation(n);
      std::vector<std::size_t> idx(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(k));
      std::sort(idx.begin(), idx.end());
      auto det = factory();
      if (!det || det->input_dim() != x.cols()) {
        throw ConfigError("ensemble factory produced an incompatible detector");
      }
      Matrix sub = x.gather_rows(idx);
      members_.push_back(Member{std::move(det), Adam(config.optimizer), member_rng,
                                member_rng.derive(kShuffleStream), std::move(idx),
                                std::move(sub)});
    }
  }

  void initialize(std::size_t round) override {
    for (auto& m : members_) {
      RngStream init =
          round == 0 ? m.base.derive(kInitStream) : m.base.derive(kReinitBase + round);
      m.detector->reset(init, m.x);
      m.optimizer.reset();
    }
  }

  double train(std::span<const double> weights, std::size_t epochs) override {
    double loss = 0.0;
    for (auto& m : members_) {
      std::vector<double> w(m.indices.size());
      for (std::size_t i = 0; i < w.size(); ++i) w[i] = weights[m.indices[i]];
      double member_loss = 0.0;
      for (std::size_t e = 0; e < epochs; ++e) {
        member_loss = train_epoch(*m.detector, m.x, w, m.optimizer, m.shuffle, batch_size_);
      }
      loss += member_loss;
    }
    return loss / static_cast<double>(members_.size());
  }

  ScoreVector scores() const override {
    std::vector<ScoreVector> per_member;
    scales_.clear();
    for (std::size_t k = 0; k < members_.size(); ++k) {
      per_member.push_back(members_[k].detector->score_all(x_));
      const ScaleChoice choice = member_scale(per_member.back());
      if (choice.fallback) {
        warnings_.push_back("ensemble member " + std::to_string(k) +
                            " has zero median score; scaled by its mean");
      }
      scales_.push_back(choice.scale);
    }
    return aggregate_scores(per_member, scales_);
  }

  std::shared_ptr<const Scorer> snapshot() const override {
    std::vector<std::shared_ptr<const Detector>> clones;
    for (const auto& m : members_) clones.emplace_back(m.detector->clone());
    return std::make_shared<EnsembleScorer>(std::move(clones), scales_);
  }

 private:
  const Matrix& x_;
  std::size_t batch_size_;
  std::vector<Member> members_;
  mutable std::vector<double> scales_;
  std::vector<std::string>& warnings_;
};

}  // namespace

IadResult run_ensemble_iad(const Matrix& x, const DetectorFactory& factory,
                           const EnsembleConfig& ensemble, const IadConfig& config,
                           const RngStream& rng) {
  ensemble.validate();
  std::vector<std::string> warnings;
  EnsembleModel model(x, factory, ensemble, config, rng, warnings);
  IadResult result = drive_rounds(model, x.rows(), config);
  result.warnings.insert(result.warnings.end(), warnings.begin(), warnings.end());
  return result;
}

}  // namespace iad
