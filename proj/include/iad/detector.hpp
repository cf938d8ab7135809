#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "iad/layers.hpp"
#include "iad/matrix.hpp"
#include "iad/optimizer.hpp"
#include "iad/rng.hpp"

namespace iad {

/// Per-sample anomaly scores in dataset row order; larger means more anomalous.
using ScoreVector = std::vector<double>;

enum class DetectorKind { kSvddOneClass, kSvddSoftBoundary, kAutoencoder, kMaf };

std::string_view to_string(DetectorKind kind);
/// Accepts the CLI spellings: svdd-oc, svdd-sb, ae, maf.
DetectorKind parse_detector_kind(std::string_view name);

struct DetectorConfig {
  DetectorKind kind = DetectorKind::kAutoencoder;
  /// SVDD: hidden widths ending in the representation width.
  /// AE: encoder widths ending in the latent width (decoder mirrors them).
  /// Empty selects default_hidden_widths(d).
  std::vector<std::size_t> hidden;
  double leaky_slope = kDefaultLeakySlope;

  double nu = 0.1;
  std::size_t radius_warmup_epochs = 10;
  std::size_t radius_refresh_every = 5;

  std::size_t flow_blocks = 5;
  std::size_t flow_hidden = 32;
  std::size_t flow_hidden_layers = 1;
  /// Score with -p(x) instead of -log p(x). Underflows for moderate d.
  bool literal_likelihood_score = false;

  void validate() const;
  nlohmann::json to_json() const;
  static DetectorConfig from_json(const nlohmann::json& j);
};

/// Tabular defaults: 128-64-32 for wide inputs, 32-16-4 for very narrow ones,
/// 32-16-8 otherwise.
std::vector<std::size_t> default_hidden_widths(std::size_t input_dim);

/// Anything that maps a feature matrix to anomaly scores.
class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual ScoreVector score_all(const Matrix& x) const = 0;
  /// Versioned checkpoint document.
  virtual nlohmann::json to_json() const = 0;
};

/// Uniform train/score interface over the base detectors.
class Detector : public Scorer {
 public:
  DetectorKind kind() const noexcept { return config_.kind; }
  const DetectorConfig& config() const noexcept { return config_; }
  std::size_t input_dim() const noexcept { return input_dim_; }

  /// Fresh parameters drawn from `rng`; `x` is the training matrix.
  virtual void reset(RngStream& rng, const Matrix& x) = 0;
  /// Unweighted per-sample training loss l(x_i).
  virtual std::vector<double> sample_losses(const Matrix& x) const = 0;
  /// Zeroes the gradient buffers, then fills them with the gradient of
  /// (1/|B|) Σ w_i l(x_i). Returns that weighted loss.
  virtual double accumulate_gradients(const Matrix& batch, std::span<const double> weights) = 0;
  virtual std::vector<ParamView> params() = 0;
  /// Hook run after each full pass over `x`.
  virtual void end_epoch(const Matrix& x) { (void)x; }
  virtual std::unique_ptr<Detector> clone() const = 0;

  /// Weighted loss at the current parameters, without touching gradients.
  double weighted_loss(const Matrix& batch, std::span<const double> weights) const;

 protected:
  Detector(DetectorConfig config, std::size_t input_dim);

  nlohmann::json checkpoint_header() const;

  DetectorConfig config_;
  std::size_t input_dim_;
};

std::unique_ptr<Detector> make_detector(const DetectorConfig& config, std::size_t input_dim);

/// Restores a detector written by Detector::to_json(). Bit-exact.
std::unique_ptr<Detector> load_detector(const nlohmann::json& checkpoint);

/// FNV-1a over the canonical JSON dump, as 16 hex digits.
std::string config_hash(const nlohmann::json& config);

nlohmann::json network_to_json(const Network& net);
Network network_from_json(const nlohmann::json& j);

/// One shuffled pass of mini-batch training on (1/|B|) Σ w_i l(x_i).
/// Returns the mean of the batch losses.
double train_epoch(Detector& detector, const Matrix& x, std::span<const double> weights,
                   Adam& optimizer, RngStream& rng, std::size_t batch_size = 128);

}  // namespace iad
