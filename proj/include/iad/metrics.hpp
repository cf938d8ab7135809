#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace iad {

/// Mann-Whitney AUC: P(s_anomaly > s_normal) + P(equal) / 2, via tie-averaged
/// ranks. labels: 0 normal, 1 anomaly. Throws UndefinedMetricError unless both
/// classes are present.
double auc(std::span<const double> scores, std::span<const int> labels);

/// 100 * (iad - base) / (best - base). Throws UndefinedMetricError when best == base.
double pgr(double auc_base, double auc_iad, double auc_best);

/// Max over 256-bin thresholds of between-class variance divided by total
/// variance, on min-max normalized scores. Returns 0 for constant scores.
double otsu_separability(std::span<const double> scores, std::size_t bins = 256);

struct KdeEstimate {
  /// All samples equal: the density is a point mass at `spike_at`.
  bool degenerate = false;
  double spike_at = 0.0;
  double bandwidth = 0.0;
  std::vector<double> grid;
  std::vector<double> density;
};

/// Silverman bandwidth: 0.9 * min(sd, IQR / 1.34) * n^(-1/5), falling back to
/// sd when the IQR is zero. Zero for a constant sample.
double silverman_bandwidth(std::span<const double> samples);

/// Gaussian-kernel density of `samples` evaluated at each grid point.
KdeEstimate weight_kde(std::span<const double> samples, std::span<const double> grid);

/// `points` evenly spaced values on [lo, hi].
std::vector<double> linspace(double lo, double hi, std::size_t points);

/// Interior strict local maxima of a sampled curve.
std::size_t count_local_maxima(std::span<const double> values);

/// Trapezoid rule on a (not necessarily uniform) grid.
double trapezoid(std::span<const double> x, std::span<const double> y);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  ///< sample standard deviation; 0 for fewer than two values
};
MeanStd mean_std(std::span<const double> values);

}  // namespace iad
