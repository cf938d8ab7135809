#include "iad/autoencoder.hpp"

#include "iad/errors.hpp"

namespace iad {

using nlohmann::json;

namespace {

Network build_autoencoder(const DetectorConfig& config, std::size_t d, std::size_t& latent) {
  const auto enc = config.hidden.empty() ? default_hidden_widths(d) : config.hidden;
  latent = enc.back();
  std::vector<std::size_t> widths{d};
  widths.insert(widths.end(), enc.begin(), enc.end());
  // Mirror: d -> h1 -> ... -> latent -> ... -> h1 -> d
  for (std::size_t i = enc.size() - 1; i-- > 0;) widths.push_back(enc[i]);
  widths.push_back(d);

  const std::size_t code_layer = enc.size() - 1;
  std::vector<DenseLayer> layers;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    const bool linear = i == code_layer || i + 2 == widths.size();
    layers.emplace_back(widths[i], widths[i + 1], /*bias=*/true,
                        linear ? Activation::kIdentity : Activation::kLeakyRelu,
                        config.leaky_slope);
  }
  return Network(std::move(layers));
}

}  // namespace

Autoencoder::Autoencoder(const DetectorConfig& config, std::size_t input_dim)
    : Detector(config, input_dim) {
  if (config.kind != DetectorKind::kAutoencoder) throw ConfigError("Autoencoder requires kind ae");
  net_ = build_autoencoder(config_, input_dim, latent_);
}

void Autoencoder::reset(RngStream& rng, const Matrix& x) {
  (void)x;
  net_.init_glorot(rng);
}

double Autoencoder::score(std::span<const double> x) const {
  Matrix m(1, x.size(), std::vector<double>(x.begin(), x.end()));
  return score_all(m)[0];
}

ScoreVector Autoencoder::score_all(const Matrix& x) const {
  const Matrix recon = net_.apply(x);
  ScoreVector out(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto a = x.row(r);
    const auto b = recon.row(r);
    double s = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) s += (a[j] - b[j]) * (a[j] - b[j]);
    out[r] = s;
  }
  return out;
}

double Autoencoder::accumulate_gradients(const Matrix& batch, std::span<const double> weights) {
  if (weights.size() != batch.rows()) throw ConfigError("weight count does not match batch size");
  net_.zero_grad();
  const Matrix recon = net_.forward(batch);
  Matrix grad(batch.rows(), batch.cols());
  double total = 0.0;
  for (std::size_t r = 0; r < batch.rows(); ++r) {
    const auto x = batch.row(r);
    const auto y = recon.row(r);
    auto g = grad.row(r);
    double s = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double diff = y[j] - x[j];
      s += diff * diff;
      g[j] = 2.0 * diff;
    }
    total += weights[r] * s;
  }
  backward_weighted(net_, grad, weights);
  return total / static_cast<double>(batch.rows());
}

json Autoencoder::to_json() const {
  json j = checkpoint_header();
  j["state"] = json{{"network", network_to_json(net_)}};
  return j;
}

std::unique_ptr<Autoencoder> Autoencoder::from_json(const json& j) {
  const auto config = DetectorConfig::from_json(j.at("config"));
  auto det = std::make_unique<Autoencoder>(config, j.at("input_dim").get<std::size_t>());
  det->net_ = network_from_json(j.at("state").at("network"));
  return det;
}

}  // namespace iad
