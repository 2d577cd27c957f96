#include "etp/tensor.hpp"

#include <cmath>
#include <functional>
#include <numeric>
#include <string>

#include "etp/errors.hpp"

namespace etp {

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

Tensor::Tensor(Shape s, double fill) : shape(std::move(s)) {
  for (auto d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_str(shape));
  }
  data.assign(shape_numel(shape), fill);
}

Tensor::Tensor(Shape s, std::vector<double> values) : shape(std::move(s)), data(std::move(values)) {
  for (auto d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_str(shape));
  }
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("shape " + shape_str(shape) + " does not hold " + std::to_string(data.size()) +
                         " values");
  }
}

Tensor Tensor::scalar(double value) { return Tensor({1}, std::vector<double>{value}); }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape.size()) {
    throw IndexError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(shape));
  }
  return shape[axis];
}

double Tensor::item() const {
  if (data.size() != 1) throw ContractError("item() on non-scalar tensor of shape " + shape_str(shape));
  return data[0];
}

void Tensor::zero_grad() { grad.assign(data.size(), 0.0); }

bool Tensor::all_finite() const noexcept {
  for (double v : data) {
    if (!std::isfinite(v)) return false;
  }
  for (double v : grad) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace etp
