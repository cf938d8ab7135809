#pragma once

#include <span>
#include <vector>

#include "iad/detector.hpp"

namespace iad {

enum class SvddMode { kOneClass, kSoftBoundary };

/// Per-sample loss from the squared distance `dist_sq`.
/// One-class: dist_sq. Soft-boundary: nu R^2 + max(0, dist_sq - R^2).
double svdd_loss(double dist_sq, SvddMode mode, double radius_sq = 0.0, double nu = 1.0);

/// Linear-interpolation quantile of `values` at level q in [0, 1].
double quantile(std::span<const double> values, double q);

/// Mean of the network's features over `x`; coordinates closer to zero than
/// `eps` are pushed to ±eps (sign preserved, zero goes to +eps).
std::vector<double> svdd_init_center(const Network& net, const Matrix& x, double eps = 0.1);

/// Deep SVDD with a bias-free network and a fixed center.
class DeepSvdd final : public Detector {
 public:
  DeepSvdd(const DetectorConfig& config, std::size_t input_dim);

  SvddMode mode() const noexcept;
  Network& network() noexcept { return net_; }
  const Network& network() const noexcept { return net_; }
  const std::vector<double>& center() const noexcept { return center_; }
  void set_center(std::vector<double> c);
  double radius_sq() const noexcept { return radius_sq_; }
  void set_radius_sq(double r2) { radius_sq_ = r2; }
  double nu() const noexcept { return config_.nu; }
  std::size_t epochs_seen() const noexcept { return epochs_; }

  /// ||phi(x) - c||^2 for a single sample.
  double score(std::span<const double> x) const;
  /// Sets R^2 to the (1 - nu)-quantile of `scores`.
  double update_radius(std::span<const double> scores);

  void reset(RngStream& rng, const Matrix& x) override;
  ScoreVector score_all(const Matrix& x) const override;
  std::vector<double> sample_losses(const Matrix& x) const override;
  double accumulate_gradients(const Matrix& batch, std::span<const double> weights) override;
  std::vector<ParamView> params() override { return net_.params(); }
  void end_epoch(const Matrix& x) override;
  std::unique_ptr<Detector> clone() const override { return std::make_unique<DeepSvdd>(*this); }
  nlohmann::json to_json() const override;

  static std::unique_ptr<DeepSvdd> from_json(const nlohmann::json& j);

 private:
  ScoreVector distances(const Matrix& features) const;

  Network net_;
  std::vector<double> center_;
  double radius_sq_ = 0.0;
  std::size_t epochs_ = 0;
};

}  // namespace iad
