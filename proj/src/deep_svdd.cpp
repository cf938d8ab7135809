#include "iad/deep_svdd.hpp"

#include <algorithm>
#include <cmath>

#include "iad/errors.hpp"

namespace iad {

using nlohmann::json;

double svdd_loss(double dist_sq, SvddMode mode, double radius_sq, double nu) {
  if (mode == SvddMode::kOneClass) return dist_sq;
  if (!(nu > 0.0 && nu <= 1.0)) throw ConfigError("nu must lie in (0, 1]");
  return nu * radius_sq + std::max(0.0, dist_sq - radius_sq);
}

double quantile(std::span<const double> values, double q) {
  if (values.empty()) throw UsageError("quantile of an empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw ConfigError("quantile level must lie in [0, 1]");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

std::vector<double> svdd_init_center(const Network& net, const Matrix& x, double eps) {
  if (x.rows() == 0) throw UsageError("center initialization needs at least one sample");
  const Matrix features = net.apply(x);
  std::vector<double> c(features.cols(), 0.0);
  for (std::size_t r = 0; r < features.rows(); ++r) {
    const auto row = features.row(r);
    for (std::size_t j = 0; j < c.size(); ++j) c[j] += row[j];
  }
  for (double& v : c) {
    v /= static_cast<double>(features.rows());
    if (std::abs(v) < eps) v = v < 0.0 ? -eps : eps;
  }
  return c;
}

namespace {

Network build_svdd_network(const DetectorConfig& config, std::size_t input_dim) {
  std::vector<std::size_t> widths{input_dim};
  const auto hidden = config.hidden.empty() ? default_hidden_widths(input_dim) : config.hidden;
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  return Network::mlp(widths, /*bias=*/false, Activation::kLeakyRelu, Activation::kIdentity,
                      config.leaky_slope);
}

}  // namespace

DeepSvdd::DeepSvdd(const DetectorConfig& config, std::size_t input_dim)
    : Detector(config, input_dim), net_(build_svdd_network(config, input_dim)) {
  if (config.kind != DetectorKind::kSvddOneClass && config.kind != DetectorKind::kSvddSoftBoundary) {
    throw ConfigError("DeepSvdd requires an SVDD detector kind");
  }
  center_.assign(net_.out_dim(), 0.0);
}

SvddMode DeepSvdd::mode() const noexcept {
  return config_.kind == DetectorKind::kSvddSoftBoundary ? SvddMode::kSoftBoundary
                                                         : SvddMode::kOneClass;
}

void DeepSvdd::set_center(std::vector<double> c) {
  if (c.size() != net_.out_dim()) throw ConfigError("center dimension mismatch");
  center_ = std::move(c);
}

void DeepSvdd::reset(RngStream& rng, const Matrix& x) {
  net_.init_glorot(rng);
  center_ = svdd_init_center(net_, x);
  radius_sq_ = 0.0;
  epochs_ = 0;
}

ScoreVector DeepSvdd::distances(const Matrix& features) const {
  ScoreVector out(features.rows());
  for (std::size_t r = 0; r < features.rows(); ++r) {
    const auto row = features.row(r);
    double d = 0.0;
    for (std::size_t j = 0; j < row.size(); ++j) {
      const double diff = row[j] - center_[j];
      d += diff * diff;
    }
    out[r] = d;
  }
  return out;
}

double DeepSvdd::score(std::span<const double> x) const {
  Matrix m(1, x.size(), std::vector<double>(x.begin(), x.end()));
  return distances(net_.apply(m))[0];
}

ScoreVector DeepSvdd::score_all(const Matrix& x) const { return distances(net_.apply(x)); }

std::vector<double> DeepSvdd::sample_losses(const Matrix& x) const {
  auto d = score_all(x);
  if (mode() == SvddMode::kSoftBoundary) {
    for (double& v : d) v = svdd_loss(v, SvddMode::kSoftBoundary, radius_sq_, config_.nu);
  }
  return d;
}

double DeepSvdd::accumulate_gradients(const Matrix& batch, std::span<const double> weights) {
  if (weights.size() != batch.rows()) throw ConfigError("weight count does not match batch size");
  net_.zero_grad();
  const Matrix features = net_.forward(batch);
  const ScoreVector dist = distances(features);
  const bool soft = mode() == SvddMode::kSoftBoundary;

  Matrix grad(features.rows(), features.cols());
  double total = 0.0;
  for (std::size_t r = 0; r < features.rows(); ++r) {
    total += weights[r] * svdd_loss(dist[r], mode(), radius_sq_, config_.nu);
    if (soft && dist[r] <= radius_sq_) continue;
    const auto f = features.row(r);
    auto g = grad.row(r);
    for (std::size_t j = 0; j < f.size(); ++j) g[j] = 2.0 * (f[j] - center_[j]);
  }
  backward_weighted(net_, grad, weights);
  return total / static_cast<double>(batch.rows());
}

double DeepSvdd::update_radius(std::span<const double> scores) {
  if (scores.empty()) throw UsageError("radius update needs scores");
  radius_sq_ = quantile(scores, 1.0 - config_.nu);
  return radius_sq_;
}

void DeepSvdd::end_epoch(const Matrix& x) {
  ++epochs_;
  if (mode() != SvddMode::kSoftBoundary) return;
  const std::size_t warmup = config_.radius_warmup_epochs;
  if (epochs_ >= warmup && (epochs_ - warmup) % config_.radius_refresh_every == 0) {
    update_radius(score_all(x));
  }
}

json DeepSvdd::to_json() const {
  json j = checkpoint_header();
  j["state"] = json{{"network", network_to_json(net_)},
                    {"center", center_},
                    {"radius_sq", radius_sq_},
                    {"epochs", epochs_}};
  return j;
}

std::unique_ptr<DeepSvdd> DeepSvdd::from_json(const json& j) {
  const auto config = DetectorConfig::from_json(j.at("config"));
  auto det = std::make_unique<DeepSvdd>(config, j.at("input_dim").get<std::size_t>());
  const json& s = j.at("state");
  det->net_ = network_from_json(s.at("network"));
  det->set_center(s.at("center").get<std::vector<double>>());
  det->radius_sq_ = s.at("radius_sq").get<double>();
  det->epochs_ = s.at("epochs").get<std::size_t>();
  return det;
}

}  // namespace iad
