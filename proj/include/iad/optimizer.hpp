#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "iad/layers.hpp"

namespace iad {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Decoupled (AdamW-style) decay, applied as p -= lr * decay * p.
  double weight_decay = 1e-6;
};

/// Adaptive-moment optimizer with bias correction.
class Adam {
 public:
  explicit Adam(AdamConfig config = {});

  const AdamConfig& config() const noexcept { return config_; }
  std::uint64_t steps() const noexcept { return step_; }

  /// One update of every parameter from its gradient buffer. Throws
  /// NumericError, leaving parameters untouched, if any gradient is non-finite.
  void step(std::span<const ParamView> params);

  void reset();

 private:
  AdamConfig config_;
  std::uint64_t step_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

}  // namespace iad
