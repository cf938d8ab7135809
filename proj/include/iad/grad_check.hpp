#pragma once

#include <functional>
#include <span>

#include "iad/layers.hpp"

namespace iad {

/// Compares analytic gradients with central finite differences.
///
/// `loss` evaluates the scalar objective at the current parameter values.
/// `analytic` must zero the gradient buffers and fill them for the current
/// values. Returns max over all parameters of
/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
double grad_check(std::span<const ParamView> params, const std::function<double()>& loss,
                  const std::function<void()>& analytic, double step = 1e-5);

}  // namespace iad
