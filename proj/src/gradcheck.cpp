#include "etp/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "etp/errors.hpp"

namespace etp {

FiniteDiffResult finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x, double h) {
  if (!(h > 0.0)) throw ContractError("finite_diff_grad: step size must be positive");
  FiniteDiffResult result;
  result.grad = Tensor(x.shape);
  Tensor probe = x;
  probe.grad.clear();
  const double center = f(probe);
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double original = probe.data[i];
    probe.data[i] = original + h;
    const double up = f(probe);
    probe.data[i] = original - h;
    const double down = f(probe);
    probe.data[i] = original;

    const double central = (up - down) / (2.0 * h);
    result.grad.data[i] = central;
    // Smooth functions give |forward - backward| ~ h * |f''|; a kink gives O(1).
    const double forward = (up - center) / h;
    const double backward = (center - down) / h;
    if (std::abs(forward - backward) > 0.1 * std::max(1.0, std::abs(central))) {
      result.reliable = false;
      result.unreliable_coords.push_back(i);
    }
  }
  return result;
}

double max_relative_error(const std::vector<double>& a, const std::vector<double>& b, double floor) {
  if (a.size() != b.size()) throw DimensionError("max_relative_error: length mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double scale = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
  }
  return worst;
}

}  // namespace etp
