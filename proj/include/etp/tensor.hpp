#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace etp {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major array of doubles with an optional gradient buffer.
// An empty `grad` means no gradient has been accumulated yet.
struct Tensor {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;

  Tensor() = default;
  explicit Tensor(Shape s, double fill = 0.0);
  Tensor(Shape s, std::vector<double> values);

  static Tensor scalar(double value);

  std::size_t numel() const noexcept { return data.size(); }
  std::size_t rank() const noexcept { return shape.size(); }
  std::size_t dim(std::size_t axis) const;
  bool has_grad() const noexcept { return !grad.empty(); }
  bool is_scalar() const noexcept { return data.size() == 1; }

  double item() const;
  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }

  // Allocates (or zeroes) the gradient buffer.
  void zero_grad();
  // Drops the gradient buffer entirely.
  void clear_grad() noexcept { grad.clear(); }

  bool all_finite() const noexcept;
};

}  // namespace etp
