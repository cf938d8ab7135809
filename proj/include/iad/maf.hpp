#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "iad/detector.hpp"

namespace iad {

/// One masked autoregressive block. `order[k]` is the feature at autoregressive
/// position k; the block's conditioner emits shift mu and log-scale a for every
/// feature such that both depend only on features earlier in `order`.
///
/// Inverse pass: u = (x - mu(x)) * exp(-a(x)), log|det du/dx| = -Σ a.
class MadeBlock {
 public:
  MadeBlock(std::size_t dim, std::size_t hidden, std::size_t hidden_layers,
            std::vector<std::size_t> order);
  explicit MadeBlock(Network conditioner, std::vector<std::size_t> order);

  std::size_t dim() const noexcept { return order_.size(); }
  const std::vector<std::size_t>& order() const noexcept { return order_; }
  Network& conditioner() noexcept { return net_; }
  const Network& conditioner() const noexcept { return net_; }

  struct Pass {
    Matrix u;
    std::vector<double> log_det;
  };
  Pass inverse(const Matrix& x) const;

 private:
  void build_masks(std::size_t hidden_layers);

  Network net_;
  std::vector<std::size_t> order_;
};

/// Masked autoregressive flow with a standard Gaussian base density.
/// Blocks alternate natural and reversed feature order.
class Maf final : public Detector {
 public:
  Maf(const DetectorConfig& config, std::size_t input_dim);

  std::vector<MadeBlock>& blocks() noexcept { return blocks_; }
  const std::vector<MadeBlock>& blocks() const noexcept { return blocks_; }

  /// log p(x) per row. Throws NumericError on non-finite log-scales.
  std::vector<double> log_prob(const Matrix& x) const;
  /// Full inverse pass x -> u through every block.
  Matrix to_base(const Matrix& x) const;

  void reset(RngStream& rng, const Matrix& x) override;
  /// -log p(x) by default; -p(x) with literal_likelihood_score.
  ScoreVector score_all(const Matrix& x) const override;
  std::vector<double> sample_losses(const Matrix& x) const override;
  double accumulate_gradients(const Matrix& batch, std::span<const double> weights) override;
  std::vector<ParamView> params() override;
  std::unique_ptr<Detector> clone() const override { return std::make_unique<Maf>(*this); }
  nlohmann::json to_json() const override;

  static std::unique_ptr<Maf> from_json(const nlohmann::json& j);

 private:
  std::vector<MadeBlock> blocks_;
};

/// log N(u; 0, I) for one row.
double standard_normal_log_density(std::span<const double> u);

}  // namespace iad
