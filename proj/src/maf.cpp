#include "iad/maf.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "iad/errors.hpp"

namespace iad {

using nlohmann::json;

double standard_normal_log_density(std::span<const double> u) {
  static const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);
  double s = 0.0;
  for (double v : u) s += v * v;
  return -0.5 * s - kHalfLog2Pi * static_cast<double>(u.size());
}

namespace {

Network build_conditioner(std::size_t d, std::size_t hidden, std::size_t hidden_layers) {
  std::vector<DenseLayer> layers;
  layers.emplace_back(d, hidden, true, Activation::kTanh);
  for (std::size_t i = 1; i < hidden_layers; ++i) {
    layers.emplace_back(hidden, hidden, true, Activation::kTanh);
  }
  layers.emplace_back(hidden, 2 * d, true, Activation::kIdentity);
  return Network(std::move(layers));
}

void check_order(const std::vector<std::size_t>& order) {
  std::vector<bool> seen(order.size(), false);
  for (auto k : order) {
    if (k >= order.size() || seen[k]) throw ConfigError("block order must be a permutation");
    seen[k] = true;
  }
}

}  // namespace

MadeBlock::MadeBlock(std::size_t dim, std::size_t hidden, std::size_t hidden_layers,
                     std::vector<std::size_t> order)
    : net_(build_conditioner(dim, hidden, hidden_layers)), order_(std::move(order)) {
  if (order_.size() != dim) throw ConfigError("block order length must equal dimension");
  check_order(order_);
  build_masks(hidden_layers);
}

MadeBlock::MadeBlock(Network conditioner, std::vector<std::size_t> order)
    : net_(std::move(conditioner)), order_(std::move(order)) {
  check_order(order_);
  if (net_.in_dim() != order_.size() || net_.out_dim() != 2 * order_.size()) {
    throw ConfigError("conditioner shape does not match block dimension");
  }
}

// Degree-based masks: input feature order[k] has degree k + 1, hidden units
// cycle through 1..max(1, d-1), and the outputs for feature order[k] only see
// hidden units of degree < k + 1.
void MadeBlock::build_masks(std::size_t hidden_layers) {
  const std::size_t d = order_.size();
  std::vector<std::size_t> in_degree(d);
  for (std::size_t k = 0; k < d; ++k) in_degree[order_[k]] = k + 1;

  auto& layers = net_.layers();
  const std::size_t hidden = layers.front().out_dim();
  const std::size_t span = std::max<std::size_t>(1, d - 1);
  std::vector<std::size_t> hidden_degree(hidden);
  for (std::size_t h = 0; h < hidden; ++h) hidden_degree[h] = h % span + 1;

  Matrix first(hidden, d);
  for (std::size_t h = 0; h < hidden; ++h) {
    for (std::size_t j = 0; j < d; ++j) first(h, j) = hidden_degree[h] >= in_degree[j] ? 1.0 : 0.0;
  }
  layers[0].set_mask(std::move(first));

  for (std::size_t l = 1; l < hidden_layers; ++l) {
    Matrix m(hidden, hidden);
    for (std::size_t a = 0; a < hidden; ++a) {
      for (std::size_t b = 0; b < hidden; ++b) {
        m(a, b) = hidden_degree[a] >= hidden_degree[b] ? 1.0 : 0.0;
      }
    }
    layers[l].set_mask(std::move(m));
  }

  Matrix out(2 * d, hidden);
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t h = 0; h < hidden; ++h) {
      const double allowed = in_degree[j] > hidden_degree[h] ? 1.0 : 0.0;
      out(j, h) = allowed;
      out(d + j, h) = allowed;
    }
  }
  layers.back().set_mask(std::move(out));
}

MadeBlock::Pass MadeBlock::inverse(const Matrix& x) const {
  const std::size_t d = dim();
  const Matrix params = net_.apply(x);
  Pass pass{Matrix(x.rows(), d), std::vector<double>(x.rows(), 0.0)};
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto p = params.row(r);
    const auto xr = x.row(r);
    auto ur = pass.u.row(r);
    double log_det = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double a = p[d + j];
      if (!std::isfinite(a)) {
        throw NumericError("non-finite log-scale for feature " + std::to_string(j) + " in row " +
                           std::to_string(r));
      }
      ur[j] = (xr[j] - p[j]) * std::exp(-a);
      log_det -= a;
    }
    pass.log_det[r] = log_det;
  }
  return pass;
}

Maf::Maf(const DetectorConfig& config, std::size_t input_dim) : Detector(config, input_dim) {
  if (config.kind != DetectorKind::kMaf) throw ConfigError("Maf requires kind maf");
  std::vector<std::size_t> natural(input_dim);
  std::iota(natural.begin(), natural.end(), std::size_t{0});
  std::vector<std::size_t> reversed(natural.rbegin(), natural.rend());
  for (std::size_t b = 0; b < config.flow_blocks; ++b) {
    blocks_.emplace_back(input_dim, config.flow_hidden, config.flow_hidden_layers,
                         b % 2 == 0 ? natural : reversed);
  }
}

void Maf::reset(RngStream& rng, const Matrix& x) {
  (void)x;
  for (auto& b : blocks_) b.conditioner().init_glorot(rng);
}

Matrix Maf::to_base(const Matrix& x) const {
  Matrix u = x;
  for (const auto& b : blocks_) u = b.inverse(u).u;
  return u;
}

std::vector<double> Maf::log_prob(const Matrix& x) const {
  if (x.cols() != input_dim_) throw ConfigError("flow input dimension mismatch");
  Matrix u = x;
  std::vector<double> total(x.rows(), 0.0);
  for (const auto& b : blocks_) {
    auto pass = b.inverse(u);
    for (std::size_t r = 0; r < x.rows(); ++r) total[r] += pass.log_det[r];
    u = std::move(pass.u);
  }
  for (std::size_t r = 0; r < x.rows(); ++r) {
    total[r] += standard_normal_log_density(u.row(r));
    if (!std::isfinite(total[r])) {
      throw NumericError("non-finite log-likelihood in row " + std::to_string(r));
    }
  }
  return total;
}

std::vector<double> Maf::sample_losses(const Matrix& x) const {
  auto lp = log_prob(x);
  for (double& v : lp) v = -v;
  return lp;
}

ScoreVector Maf::score_all(const Matrix& x) const {
  auto lp = log_prob(x);
  for (double& v : lp) v = config_.literal_likelihood_score ? -std::exp(v) : -v;
  return lp;
}

double Maf::accumulate_gradients(const Matrix& batch, std::span<const double> weights) {
  if (weights.size() != batch.rows()) throw ConfigError("weight count does not match batch size");
  if (batch.cols() != input_dim_) throw ConfigError("flow input dimension mismatch");
  const std::size_t n = batch.rows();
  const std::size_t d = input_dim_;

  // Forward, keeping each block's output and log-scales.
  std::vector<Matrix> outputs;
  std::vector<Matrix> log_scales;
  outputs.reserve(blocks_.size());
  log_scales.reserve(blocks_.size());
  std::vector<double> nll(n, 0.0);
  const Matrix* u_in = &batch;
  for (auto& block : blocks_) {
    auto& net = block.conditioner();
    net.zero_grad();
    const Matrix p = net.forward(*u_in);
    Matrix u(n, d);
    Matrix a(n, d);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t j = 0; j < d; ++j) {
        a(r, j) = p(r, d + j);
        u(r, j) = ((*u_in)(r, j) - p(r, j)) * std::exp(-a(r, j));
        nll[r] += a(r, j);
      }
    }
    outputs.push_back(std::move(u));
    log_scales.push_back(std::move(a));
    u_in = &outputs.back();
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    nll[r] -= standard_normal_log_density(outputs.back().row(r));
    total += weights[r] * nll[r];
  }

  // dL/du at the base layer is c_r * u with c_r = w_r / n.
  Matrix g = outputs.back();
  for (std::size_t r = 0; r < n; ++r) {
    const double c = weights[r] * inv_n;
    for (double& v : g.row(r)) v *= c;
  }
  for (std::size_t b = blocks_.size(); b-- > 0;) {
    const Matrix& u = outputs[b];
    const Matrix& a = log_scales[b];
    Matrix g_params(n, 2 * d);
    Matrix g_in(n, d);
    for (std::size_t r = 0; r < n; ++r) {
      const double c = weights[r] * inv_n;
      for (std::size_t j = 0; j < d; ++j) {
        const double scale = std::exp(-a(r, j));
        g_params(r, j) = -g(r, j) * scale;
        g_params(r, d + j) = -g(r, j) * u(r, j) + c;
        g_in(r, j) = g(r, j) * scale;
      }
    }
    const Matrix through_net = blocks_[b].conditioner().backward(g_params);
    for (std::size_t i = 0; i < g_in.size(); ++i) g_in.values()[i] += through_net.values()[i];
    g = std::move(g_in);
  }
  return total * inv_n;
}

std::vector<ParamView> Maf::params() {
  std::vector<ParamView> out;
  for (auto& b : blocks_) b.conditioner().append_params(out);
  return out;
}

json Maf::to_json() const {
  json blocks = json::array();
  for (const auto& b : blocks_) {
    blocks.push_back(json{{"order", b.order()}, {"network", network_to_json(b.conditioner())}});
  }
  json j = checkpoint_header();
  j["state"] = json{{"blocks", std::move(blocks)}};
  return j;
}

std::unique_ptr<Maf> Maf::from_json(const json& j) {
  const auto config = DetectorConfig::from_json(j.at("config"));
  auto det = std::make_unique<Maf>(config, j.at("input_dim").get<std::size_t>());
  const json& blocks = j.at("state").at("blocks");
  if (blocks.size() != det->blocks_.size()) throw LoadError("flow block count mismatch");
  det->blocks_.clear();
  for (const auto& jb : blocks) {
    det->blocks_.emplace_back(network_from_json(jb.at("network")),
                              jb.at("order").get<std::vector<std::size_t>>());
  }
  return det;
}

}  // namespace iad
