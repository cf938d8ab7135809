#include "iad/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace iad {

double grad_check(std::span<const ParamView> params, const std::function<double()>& loss,
                  const std::function<void()>& analytic, double step) {
  analytic();
  std::vector<std::vector<double>> expected;
  expected.reserve(params.size());
  for (const auto& p : params) expected.emplace_back(p.grad.begin(), p.grad.end());

  double worst = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto value = params[k].value;
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double saved = value[i];
      value[i] = saved + step;
      const double up = loss();
      value[i] = saved - step;
      const double down = loss();
      value[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double a = expected[k][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace iad
