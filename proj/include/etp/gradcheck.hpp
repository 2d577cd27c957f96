#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "etp/tensor.hpp"

namespace etp {

struct FiniteDiffResult {
  Tensor grad;
  // False when some coordinate's one-sided differences disagree, i.e. the
  // function has a kink or singularity within h of x (e.g. a norm at 0).
  bool reliable = true;
  std::vector<std::size_t> unreliable_coords;
};

// Central-difference gradient (f(x + h e_i) - f(x - h e_i)) / 2h.
// Test oracle only; costs 3 evaluations of f per coordinate.
FiniteDiffResult finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x, double h);

// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor).
double max_relative_error(const std::vector<double>& a, const std::vector<double>& b, double floor = 1e-8);

}  // namespace etp
