#include "iad/layers.hpp"

#include <cmath>
#include <string>

#include "iad/errors.hpp"

namespace iad {

double activate(Activation act, double slope, double x) noexcept {
  switch (act) {
    case Activation::kLeakyRelu:
      return x > 0.0 ? x : slope * x;
    case Activation::kTanh:
      return std::tanh(x);
    case Activation::kIdentity:
      break;
  }
  return x;
}

namespace {

double activate_grad(Activation act, double slope, double pre) noexcept {
  switch (act) {
    case Activation::kLeakyRelu:
      return pre > 0.0 ? 1.0 : slope;
    case Activation::kTanh: {
      const double t = std::tanh(pre);
      return 1.0 - t * t;
    }
    case Activation::kIdentity:
      break;
  }
  return 1.0;
}

}  // namespace

DenseLayer::DenseLayer(std::size_t in, std::size_t out, bool bias, Activation act, double slope)
    : weight_(out, in),
      weight_grad_(out, in),
      bias_(bias ? out : 0, 0.0),
      bias_grad_(bias ? out : 0, 0.0),
      has_bias_(bias),
      act_(act),
      slope_(slope) {
  if (in == 0 || out == 0) throw ConfigError("dense layer dimensions must be positive");
}

void DenseLayer::init_glorot(RngStream& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in_dim() + out_dim()));
  for (double& w : weight_.values()) w = rng.uniform(-limit, limit);
  for (double& b : bias_) b = 0.0;
  if (mask_) {
    auto m = mask_->values();
    auto w = weight_.values();
    for (std::size_t i = 0; i < w.size(); ++i) w[i] *= m[i];
  }
}

void DenseLayer::set_mask(Matrix mask) {
  if (mask.rows() != out_dim() || mask.cols() != in_dim()) {
    throw ConfigError("mask shape does not match weight shape");
  }
  for (double v : mask.values()) {
    if (v != 0.0 && v != 1.0) throw ConfigError("mask entries must be 0 or 1");
  }
  auto w = weight_.values();
  auto m = mask.values();
  for (std::size_t i = 0; i < w.size(); ++i) w[i] *= m[i];
  mask_ = std::move(mask);
}

Matrix DenseLayer::linear(const Matrix& x) const {
  if (x.cols() != in_dim()) {
    throw ConfigError("layer expects " + std::to_string(in_dim()) + " inputs, got " +
                      std::to_string(x.cols()));
  }
  const std::size_t n = x.rows();
  const std::size_t in = in_dim();
  const std::size_t out = out_dim();
  const double* mask = mask_ ? mask_->values().data() : nullptr;
  Matrix y(n, out);
  for (std::size_t r = 0; r < n; ++r) {
    const double* xr = x.row(r).data();
    double* yr = y.row(r).data();
    for (std::size_t o = 0; o < out; ++o) {
      const double* wo = weight_.row(o).data();
      double acc = has_bias_ ? bias_[o] : 0.0;
      if (mask) {
        const double* mo = mask + o * in;
        for (std::size_t i = 0; i < in; ++i) acc += wo[i] * mo[i] * xr[i];
      } else {
        for (std::size_t i = 0; i < in; ++i) acc += wo[i] * xr[i];
      }
      yr[o] = acc;
    }
  }
  return y;
}

Matrix DenseLayer::apply(const Matrix& x) const {
  Matrix y = linear(x);
  if (act_ != Activation::kIdentity) {
    for (double& v : y.values()) v = activate(act_, slope_, v);
  }
  return y;
}

Matrix DenseLayer::forward(const Matrix& x) {
  cache_in_ = x;
  cache_pre_ = linear(x);
  cached_ = true;
  Matrix y = cache_pre_;
  if (act_ != Activation::kIdentity) {
    for (double& v : y.values()) v = activate(act_, slope_, v);
  }
  return y;
}

Matrix DenseLayer::backward(const Matrix& grad_out) {
  if (!cached_) throw UsageError("backward called without a cached forward pass");
  if (grad_out.rows() != cache_pre_.rows() || grad_out.cols() != out_dim()) {
    throw ConfigError("gradient shape does not match cached forward pass");
  }
  const std::size_t n = grad_out.rows();
  const std::size_t in = in_dim();
  const std::size_t out = out_dim();
  const double* mask = mask_ ? mask_->values().data() : nullptr;

  Matrix delta = grad_out;
  if (act_ != Activation::kIdentity) {
    auto d = delta.values();
    auto p = cache_pre_.values();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] *= activate_grad(act_, slope_, p[i]);
  }

  Matrix grad_in(n, in);
  for (std::size_t r = 0; r < n; ++r) {
    const double* dr = delta.row(r).data();
    const double* xr = cache_in_.row(r).data();
    double* gr = grad_in.row(r).data();
    for (std::size_t o = 0; o < out; ++o) {
      const double d = dr[o];
      if (d == 0.0) continue;
      double* gw = weight_grad_.row(o).data();
      const double* wo = weight_.row(o).data();
      if (mask) {
        const double* mo = mask + o * in;
        for (std::size_t i = 0; i < in; ++i) {
          gw[i] += d * xr[i] * mo[i];
          gr[i] += d * wo[i] * mo[i];
        }
      } else {
        for (std::size_t i = 0; i < in; ++i) {
          gw[i] += d * xr[i];
          gr[i] += d * wo[i];
        }
      }
      if (has_bias_) bias_grad_[o] += d;
    }
  }
  return grad_in;
}

void DenseLayer::zero_grad() {
  weight_grad_.fill(0.0);
  std::fill(bias_grad_.begin(), bias_grad_.end(), 0.0);
}

void DenseLayer::append_params(std::vector<ParamView>& out) {
  out.push_back({weight_.values(), weight_grad_.values()});
  if (has_bias_) out.push_back({bias_, bias_grad_});
}

Network::Network(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
  for (std::size_t i = 1; i < layers_.size(); ++i) {
    if (layers_[i].in_dim() != layers_[i - 1].out_dim()) {
      throw ConfigError("layer " + std::to_string(i) + " input width " +
                        std::to_string(layers_[i].in_dim()) + " does not match previous output " +
                        std::to_string(layers_[i - 1].out_dim()));
    }
  }
}

Network Network::mlp(std::span<const std::size_t> widths, bool bias, Activation hidden,
                     Activation last, double slope) {
  if (widths.size() < 2) throw ConfigError("an MLP needs at least input and output widths");
  std::vector<DenseLayer> layers;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    const bool is_last = i + 2 == widths.size();
    layers.emplace_back(widths[i], widths[i + 1], bias, is_last ? last : hidden, slope);
  }
  return Network(std::move(layers));
}

std::size_t Network::in_dim() const { return layers_.empty() ? 0 : layers_.front().in_dim(); }
std::size_t Network::out_dim() const { return layers_.empty() ? 0 : layers_.back().out_dim(); }

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.weight().size() + l.bias().size();
  return n;
}

void Network::init_glorot(RngStream& rng) {
  for (auto& l : layers_) l.init_glorot(rng);
}

void Network::check_input(const Matrix& x) const {
  if (layers_.empty()) throw ConfigError("empty network");
  if (x.cols() != in_dim()) {
    throw ConfigError("network expects " + std::to_string(in_dim()) + " features, got " +
                      std::to_string(x.cols()));
  }
}

Matrix Network::apply(const Matrix& x) const {
  check_input(x);
  Matrix h = layers_.front().apply(x);
  for (std::size_t i = 1; i < layers_.size(); ++i) h = layers_[i].apply(h);
  return h;
}

Matrix Network::forward(const Matrix& x) {
  check_input(x);
  Matrix h = layers_.front().forward(x);
  for (std::size_t i = 1; i < layers_.size(); ++i) h = layers_[i].forward(h);
  cached_ = true;
  return h;
}

Matrix Network::backward(const Matrix& grad_out) {
  if (!cached_) throw UsageError("backward called without a cached forward pass");
  Matrix g = grad_out;
  for (std::size_t i = layers_.size(); i-- > 0;) g = layers_[i].backward(g);
  return g;
}

void Network::zero_grad() {
  for (auto& l : layers_) l.zero_grad();
}

std::vector<ParamView> Network::params() {
  std::vector<ParamView> out;
  append_params(out);
  return out;
}

void Network::append_params(std::vector<ParamView>& out) {
  for (auto& l : layers_) l.append_params(out);
}

void scale_rows_by_weight(Matrix& m, std::span<const double> weights) {
  if (weights.size() != m.rows()) throw ConfigError("weight count does not match batch size");
  const double inv_b = 1.0 / static_cast<double>(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const double c = weights[r] * inv_b;
    for (double& v : m.row(r)) v *= c;
  }
}

Matrix backward_weighted(Network& net, const Matrix& loss_grad, std::span<const double> weights) {
  if (!net.has_cache()) throw UsageError("backward called without a cached forward pass");
  Matrix g = loss_grad;
  scale_rows_by_weight(g, weights);
  return net.backward(g);
}

}  // namespace iad
