#include "iad/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "iad/deep_svdd.hpp"
#include "iad/errors.hpp"

namespace iad {

double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ConfigError("score and label counts differ");
  const std::size_t n = scores.size();
  std::size_t positives = 0;
  for (int l : labels) {
    if (l != 0 && l != 1) throw ConfigError("labels must be 0 or 1");
    positives += static_cast<std::size_t>(l);
  }
  const std::size_t negatives = n - positives;
  if (positives == 0 || negatives == 0) {
    throw UndefinedMetricError("AUC needs at least one normal and one anomalous sample");
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  double positive_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) {
      if (labels[order[k]] == 1) positive_rank_sum += avg_rank;
    }
    i = j + 1;
  }
  const double np = static_cast<double>(positives);
  const double nn = static_cast<double>(negatives);
  return (positive_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

double pgr(double auc_base, double auc_iad, double auc_best) {
  const double denom = auc_best - auc_base;
  if (denom == 0.0) throw UndefinedMetricError("PGR undefined when IAD-Best equals Base");
  return 100.0 * (auc_iad - auc_base) / denom;
}

double otsu_separability(std::span<const double> scores, std::size_t bins) {
  if (scores.size() < 2) throw UsageError("Otsu separability needs at least two scores");
  if (bins < 2) throw ConfigError("Otsu needs at least two bins");
  const auto [lo_it, hi_it] = std::minmax_element(scores.begin(), scores.end());
  const double lo = *lo_it;
  const double range = *hi_it - lo;
  if (!(range > 0.0)) return 0.0;

  std::vector<double> hist(bins, 0.0);
  for (double s : scores) {
    const double v = (s - lo) / range;
    auto b = static_cast<std::size_t>(v * static_cast<double>(bins));
    hist[std::min(b, bins - 1)] += 1.0;
  }
  const double n = static_cast<double>(scores.size());
  std::vector<double> center(bins);
  for (std::size_t b = 0; b < bins; ++b) {
    center[b] = (static_cast<double>(b) + 0.5) / static_cast<double>(bins);
  }
  double mean = 0.0;
  for (std::size_t b = 0; b < bins; ++b) mean += hist[b] * center[b];
  mean /= n;
  double total_var = 0.0;
  for (std::size_t b = 0; b < bins; ++b) {
    total_var += hist[b] * (center[b] - mean) * (center[b] - mean);
  }
  total_var /= n;
  if (!(total_var > 0.0)) return 0.0;

  double best = 0.0;
  double w0 = 0.0;
  double sum0 = 0.0;
  for (std::size_t b = 0; b + 1 < bins; ++b) {
    w0 += hist[b] / n;
    sum0 += hist[b] * center[b] / n;
    const double w1 = 1.0 - w0;
    if (w0 <= 0.0 || w1 <= 0.0) continue;
    const double mu0 = sum0 / w0;
    const double mu1 = (mean - sum0) / w1;
    best = std::max(best, w0 * w1 * (mu0 - mu1) * (mu0 - mu1));
  }
  return std::min(1.0, best / total_var);
}

double silverman_bandwidth(std::span<const double> samples) {
  const std::size_t n = samples.size();
  if (n < 2) throw UsageError("bandwidth needs at least two samples");
  const MeanStd ms = mean_std(samples);
  if (!(ms.std > 0.0)) return 0.0;
  const double iqr = quantile(samples, 0.75) - quantile(samples, 0.25);
  double spread = std::min(ms.std, iqr / 1.34);
  if (!(spread > 0.0)) spread = ms.std;
  return 0.9 * spread * std::pow(static_cast<double>(n), -0.2);
}

KdeEstimate weight_kde(std::span<const double> samples, std::span<const double> grid) {
  KdeEstimate est;
  est.grid.assign(grid.begin(), grid.end());
  est.density.assign(grid.size(), 0.0);
  est.bandwidth = silverman_bandwidth(samples);
  if (est.bandwidth == 0.0) {
    est.degenerate = true;
    est.spike_at = samples.front();
    return est;
  }
  const double h = est.bandwidth;
  const double norm =
      1.0 / (static_cast<double>(samples.size()) * h * std::sqrt(2.0 * std::numbers::pi));
  for (std::size_t g = 0; g < grid.size(); ++g) {
    double acc = 0.0;
    for (double s : samples) {
      const double z = (grid[g] - s) / h;
      acc += std::exp(-0.5 * z * z);
    }
    est.density[g] = acc * norm;
  }
  return est;
}

std::vector<double> linspace(double lo, double hi, std::size_t points) {
  std::vector<double> out(points);
  if (points == 1) {
    out[0] = lo;
    return out;
  }
  for (std::size_t i = 0; i < points; ++i) {
    out[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1);
  }
  return out;
}

std::size_t count_local_maxima(std::span<const double> values) {
  std::size_t count = 0;
  std::size_t i = 1;
  while (i + 1 < values.size()) {
    if (values[i] > values[i - 1]) {
      // Walk across a plateau before comparing with the right side.
      std::size_t j = i;
      while (j + 1 < values.size() && values[j + 1] == values[i]) ++j;
      if (j + 1 < values.size() && values[j + 1] < values[i]) ++count;
      i = j + 1;
    } else {
      ++i;
    }
  }
  return count;
}

double trapezoid(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ConfigError("trapezoid needs matching x and y");
  double s = 0.0;
  for (std::size_t i = 1; i < x.size(); ++i) s += 0.5 * (y[i] + y[i - 1]) * (x[i] - x[i - 1]);
  return s;
}

MeanStd mean_std(std::span<const double> values) {
  MeanStd out;
  if (values.empty()) return out;
  out.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  if (values.size() < 2) return out;
  double ss = 0.0;
  for (double v : values) ss += (v - out.mean) * (v - out.mean);
  out.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  return out;
}

}  // namespace iad
