#pragma once

#include <span>

#include "iad/detector.hpp"

namespace iad {

/// MLP autoencoder scored by squared reconstruction error.
class Autoencoder final : public Detector {
 public:
  Autoencoder(const DetectorConfig& config, std::size_t input_dim);

  /// Encoder layers followed by the mirrored decoder.
  Network& network() noexcept { return net_; }
  const Network& network() const noexcept { return net_; }
  std::size_t latent_dim() const noexcept { return latent_; }

  Matrix reconstruct(const Matrix& x) const { return net_.apply(x); }
  double score(std::span<const double> x) const;

  void reset(RngStream& rng, const Matrix& x) override;
  ScoreVector score_all(const Matrix& x) const override;
  std::vector<double> sample_losses(const Matrix& x) const override { return score_all(x); }
  double accumulate_gradients(const Matrix& batch, std::span<const double> weights) override;
  std::vector<ParamView> params() override { return net_.params(); }
  std::unique_ptr<Detector> clone() const override { return std::make_unique<Autoencoder>(*this); }
  nlohmann::json to_json() const override;

  static std::unique_ptr<Autoencoder> from_json(const nlohmann::json& j);

 private:
  Network net_;
  std::size_t latent_ = 0;
};

}  // namespace iad
