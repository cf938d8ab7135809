#include "iad/optimizer.hpp"

#include <cmath>
#include <string>

#include "iad/errors.hpp"

namespace iad {

Adam::Adam(AdamConfig config) : config_(config) {
  if (!(config_.learning_rate >= 0.0)) throw ConfigError("learning rate must be >= 0");
  if (!(config_.weight_decay >= 0.0)) throw ConfigError("weight decay must be >= 0");
  if (!(config_.beta1 >= 0.0 && config_.beta1 < 1.0 && config_.beta2 >= 0.0 &&
        config_.beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
}

void Adam::reset() {
  step_ = 0;
  m_.clear();
  v_.clear();
}

void Adam::step(std::span<const ParamView> params) {
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.emplace_back(p.value.size(), 0.0);
      v_.emplace_back(p.value.size(), 0.0);
    }
  }
  if (m_.size() != params.size()) throw ConfigError("parameter list changed between steps");
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k].value.size() != m_[k].size() || params[k].grad.size() != m_[k].size()) {
      throw ConfigError("parameter " + std::to_string(k) + " changed shape between steps");
    }
    for (std::size_t i = 0; i < params[k].grad.size(); ++i) {
      if (!std::isfinite(params[k].grad[i])) {
        throw NumericError("non-finite gradient in parameter tensor " + std::to_string(k) +
                           " at index " + std::to_string(i) + " (step " +
                           std::to_string(step_ + 1) + ")");
      }
    }
  }

  ++step_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double t = static_cast<double>(step_);
  const double c1 = 1.0 - std::pow(b1, t);
  const double c2 = 1.0 - std::pow(b2, t);
  const double lr = config_.learning_rate;
  const double decay = lr * config_.weight_decay;

  for (std::size_t k = 0; k < params.size(); ++k) {
    auto value = params[k].value;
    auto grad = params[k].grad;
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double g = grad[i];
      m[i] = b1 * m[i] + (1.0 - b1) * g;
      v[i] = b2 * v[i] + (1.0 - b2) * g * g;
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      value[i] -= decay * value[i] + lr * m_hat / (std::sqrt(v_hat) + config_.epsilon);
    }
  }
}

}  // namespace iad
