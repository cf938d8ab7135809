#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "iad/matrix.hpp"
#include "iad/rng.hpp"

namespace iad {

enum class Activation { kIdentity, kLeakyRelu, kTanh };

inline constexpr double kDefaultLeakySlope = 0.01;

/// A trainable tensor and its gradient buffer, viewed as flat spans.
struct ParamView {
  std::span<double> value;
  std::span<double> grad;
};

double activate(Activation act, double slope, double x) noexcept;

/// Fully connected layer y = act(x W^T + b), with an optional binary mask on W.
///
/// With a mask the effective weight is W ⊙ M in both passes, so masked
/// entries never receive gradient.
class DenseLayer {
 public:
  DenseLayer(std::size_t in, std::size_t out, bool bias, Activation act,
             double slope = kDefaultLeakySlope);

  std::size_t in_dim() const noexcept { return weight_.cols(); }
  std::size_t out_dim() const noexcept { return weight_.rows(); }
  bool has_bias() const noexcept { return has_bias_; }
  Activation activation() const noexcept { return act_; }
  double slope() const noexcept { return slope_; }

  /// Glorot-uniform weights, zero bias.
  void init_glorot(RngStream& rng);

  void set_mask(Matrix mask);
  const std::optional<Matrix>& mask() const noexcept { return mask_; }

  Matrix& weight() noexcept { return weight_; }
  const Matrix& weight() const noexcept { return weight_; }
  std::vector<double>& bias() noexcept { return bias_; }
  const std::vector<double>& bias() const noexcept { return bias_; }
  const Matrix& weight_grad() const noexcept { return weight_grad_; }
  const std::vector<double>& bias_grad() const noexcept { return bias_grad_; }

  /// Inference pass; does not touch the cache.
  Matrix apply(const Matrix& x) const;
  /// Training pass; caches input and pre-activation for backward().
  Matrix forward(const Matrix& x);
  /// Accumulates parameter gradients and returns dL/dx.
  Matrix backward(const Matrix& grad_out);

  void zero_grad();
  void clear_cache() noexcept { cached_ = false; }
  void append_params(std::vector<ParamView>& out);

 private:
  Matrix linear(const Matrix& x) const;

  Matrix weight_;
  Matrix weight_grad_;
  std::vector<double> bias_;
  std::vector<double> bias_grad_;
  std::optional<Matrix> mask_;
  bool has_bias_;
  Activation act_;
  double slope_;

  Matrix cache_in_;
  Matrix cache_pre_;
  bool cached_ = false;
};

/// Ordered stack of dense layers.
class Network {
 public:
  Network() = default;
  explicit Network(std::vector<DenseLayer> layers);

  /// Builds widths[0] -> widths[1] -> ... with `hidden` activation on all but
  /// the last layer and `last` activation on the final one.
  static Network mlp(std::span<const std::size_t> widths, bool bias, Activation hidden,
                     Activation last, double slope = kDefaultLeakySlope);

  std::size_t in_dim() const;
  std::size_t out_dim() const;
  std::size_t parameter_count() const;

  std::vector<DenseLayer>& layers() noexcept { return layers_; }
  const std::vector<DenseLayer>& layers() const noexcept { return layers_; }

  void init_glorot(RngStream& rng);

  Matrix apply(const Matrix& x) const;
  Matrix forward(const Matrix& x);
  Matrix backward(const Matrix& grad_out);
  bool has_cache() const noexcept { return cached_; }

  void zero_grad();
  std::vector<ParamView> params();
  void append_params(std::vector<ParamView>& out);

 private:
  void check_input(const Matrix& x) const;

  std::vector<DenseLayer> layers_;
  bool cached_ = false;
};

/// Backpropagates the per-sample loss gradient `loss_grad` (row i = dl_i/dy_i)
/// for the weighted batch loss (1/|B|) Σ w_i l_i. Accumulates into the
/// network's gradient buffers and returns dL/dx.
Matrix backward_weighted(Network& net, const Matrix& loss_grad, std::span<const double> weights);

/// Scales row i of m by weights[i] / rows.
void scale_rows_by_weight(Matrix& m, std::span<const double> weights);

}  // namespace iad
