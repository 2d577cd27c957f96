#pragma once

// Define-by-run reverse-mode differentiation over Tensor values.
//
// A Tape records every operation applied to Vars created from it. Parameters
// enter the tape through Tape::watch(); after Tape::backward() their `grad`
// buffers hold d(loss)/d(param), accumulated across calls until cleared.
// A tape (and every Var pointing into it) is a single-threaded unit of work.

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "etp/tensor.hpp"

namespace etp {

enum class OpKind {
  leaf,
  constant,
  matmul,
  transpose,
  add,
  mul,
  scale,
  sum,
  add_row_bias,
  conv2d,
  add_channel_bias,
  reshape,
  relu,
  softmax_cross_entropy,
  mse_loss,
  group_norms,
  weighted_sum,
};

class Tape;

// Handle to one recorded value on a tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

  const Tensor& value() const;
  const Shape& shape() const { return value().shape; }
  double item() const { return value().item(); }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

struct TapeNode {
  using BackwardFn = std::function<void(std::span<const double> out_grad, Tape& tape)>;

  OpKind op = OpKind::constant;
  std::vector<std::size_t> input_ids;
  std::size_t output_id = 0;
  Tensor value;
  std::vector<double> grad;
  bool requires_grad = false;
  // The backward rule; captures whatever forward context it needs.
  BackwardFn backward;
  // Leaves only: parameter that receives the accumulated gradient.
  Tensor* sink = nullptr;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Records `param` as a leaf. The value is copied; gradients flow back into
  // param.grad when param.requires_grad is set.
  Var watch(Tensor& param);
  Var constant(Tensor value);

  const TapeNode& node(std::size_t id) const { return nodes_.at(id); }
  std::size_t size() const noexcept { return nodes_.size(); }

  // Populates gradients of every watched parameter reachable from `loss`.
  void backward(Var loss);

  // Used by op implementations.
  Var record(OpKind op, std::vector<std::size_t> inputs, Tensor value, TapeNode::BackwardFn backward);
  std::span<double> grad_buffer(std::size_t id);
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

 private:
  std::vector<TapeNode> nodes_;
};

// Matrix product of [m x k] and [k x n].
Var matmul(Var a, Var b);
Var transpose(Var a);
// Elementwise sum / product of equally shaped operands.
Var add(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var sum(Var a);
// x [N x M] + b [M], broadcast over rows.
Var add_row_bias(Var x, Var bias);
// Cross-correlation of input [N x C_in x H x W] with kernel [C_out x C_in x K x K].
Var conv2d(Var input, Var kernel, std::size_t stride, std::size_t padding);
// x [N x C x H x W] + b [C].
Var add_channel_bias(Var x, Var bias);
Var reshape(Var a, Shape shape);
Var relu(Var x);
// Mean over the batch of -log softmax(logits)[label].
Var softmax_cross_entropy(Var logits, std::span<const std::size_t> labels);
Var mse_loss(Var pred, Var target);
// Per-group Euclidean norms of a parameter grouped along axis 0, with the
// bias entry of each group included. Gradient is zero for norms below 1e-12.
Var group_norms(Var weight, std::optional<Var> bias);
// Scalar sum_i coefficients[i] * v[i] with constant coefficients.
Var weighted_sum(Var v, std::span<const double> coefficients);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator*(double c, Var a) { return scale(a, c); }

// Output spatial size of a convolution, or DimensionError.
std::size_t conv_output_size(std::size_t input, std::size_t kernel, std::size_t stride, std::size_t padding);

}  // namespace etp
