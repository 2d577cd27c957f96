#include "etp/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "etp/errors.hpp"

namespace etp {

namespace {

constexpr double kNormFloor = 1e-12;

Tape& same_tape(const Var& a, const Var& b) {
  if (!a.valid() || !b.valid()) throw ContractError("operation on an unbound Var");
  if (&a.tape() != &b.tape()) throw ContractError("operands recorded on different tapes");
  return a.tape();
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape != b.shape) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape) + " vs " + shape_str(b.shape));
  }
}

}  // namespace

const Tensor& Var::value() const {
  if (!valid()) throw ContractError("value() on an unbound Var");
  return tape_->node(id_).value;
}

Var Tape::watch(Tensor& param) {
  TapeNode node;
  node.op = OpKind::leaf;
  node.output_id = nodes_.size();
  node.value.shape = param.shape;
  node.value.data = param.data;
  node.requires_grad = param.requires_grad;
  node.sink = &param;
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  TapeNode node;
  node.op = OpKind::constant;
  node.output_id = nodes_.size();
  value.grad.clear();
  value.requires_grad = false;
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(OpKind op, std::vector<std::size_t> inputs, Tensor value, TapeNode::BackwardFn backward) {
  TapeNode node;
  node.op = op;
  node.output_id = nodes_.size();
  node.requires_grad = std::any_of(inputs.begin(), inputs.end(), [&](std::size_t id) {
    if (id >= nodes_.size()) throw ContractError("tape input recorded after its consumer");
    return nodes_[id].requires_grad;
  });
  node.input_ids = std::move(inputs);
  node.value = std::move(value);
  node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

std::span<double> Tape::grad_buffer(std::size_t id) {
  auto& node = nodes_.at(id);
  if (node.grad.empty()) node.grad.assign(node.value.numel(), 0.0);
  return node.grad;
}

void Tape::backward(Var loss) {
  if (!loss.valid() || &loss.tape() != this) throw ContractError("backward: loss was not recorded on this tape");
  const auto& loss_value = nodes_.at(loss.id()).value;
  if (loss_value.numel() != 1) {
    throw ContractError("backward: loss must be a scalar, got shape " + shape_str(loss_value.shape));
  }
  for (auto& node : nodes_) node.grad.clear();
  nodes_[loss.id()].grad.assign(1, 1.0);

  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    auto& node = nodes_[i];
    if (node.grad.empty() || !node.requires_grad) continue;
    if (node.op == OpKind::leaf) {
      Tensor* param = node.sink;
      if (param == nullptr || !param->requires_grad) continue;
      if (param->grad.size() != param->data.size()) param->zero_grad();
      for (std::size_t j = 0; j < node.grad.size(); ++j) param->grad[j] += node.grad[j];
      continue;
    }
    if (node.backward) node.backward(node.grad, *this);
  }
}

std::size_t conv_output_size(std::size_t input, std::size_t kernel, std::size_t stride, std::size_t padding) {
  if (stride == 0) throw ContractError("conv2d: stride must be positive");
  if (input + 2 * padding < kernel) {
    throw DimensionError("conv2d: kernel " + std::to_string(kernel) + " exceeds padded input " +
                         std::to_string(input + 2 * padding));
  }
  return (input + 2 * padding - kernel) / stride + 1;
}

Var matmul(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.shape[1] != bv.shape[0]) {
    throw DimensionError("matmul: cannot multiply " + shape_str(av.shape) + " by " + shape_str(bv.shape));
  }
  const std::size_t m = av.shape[0], k = av.shape[1], n = bv.shape[1];
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av.data[i * k + p];
      if (aip == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) out.data[i * n + j] += aip * bv.data[p * n + j];
    }
  }
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(OpKind::matmul, {ia, ib}, std::move(out), [=](std::span<const double> g, Tape& t) {
    const auto& A = t.node(ia).value.data;
    const auto& B = t.node(ib).value.data;
    if (t.requires_grad(ia)) {
      auto ga = t.grad_buffer(ia);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * B[p * n + j];
          ga[i * k + p] += acc;
        }
    }
    if (t.requires_grad(ib)) {
      auto gb = t.grad_buffer(ib);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = A[i * k + p];
          if (aip == 0.0) continue;
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * g[i * n + j];
        }
    }
  });
}

Var transpose(Var a) {
  const Tensor& av = a.value();
  if (av.rank() != 2) throw DimensionError("transpose: expected a matrix, got " + shape_str(av.shape));
  const std::size_t r = av.shape[0], c = av.shape[1];
  Tensor out({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out.data[j * r + i] = av.data[i * c + j];
  const std::size_t ia = a.id();
  return a.tape().record(OpKind::transpose, {ia}, std::move(out), [=](std::span<const double> g, Tape& t) {
    auto ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[j * r + i];
  });
}

Var add(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  require_same_shape("add", a.value(), b.value());
  Tensor out = a.value();
  const auto& bd = b.value().data;
  for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] += bd[i];
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(OpKind::add, {ia, ib}, std::move(out), [=](std::span<const double> g, Tape& t) {
    for (std::size_t id : {ia, ib}) {
      if (!t.requires_grad(id)) continue;
      auto gi = t.grad_buffer(id);
      for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
    }
  });
}

Var mul(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  require_same_shape("mul", a.value(), b.value());
  Tensor out = a.value();
  const auto& bd = b.value().data;
  for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] *= bd[i];
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(OpKind::mul, {ia, ib}, std::move(out), [=](std::span<const double> g, Tape& t) {
    const auto& A = t.node(ia).value.data;
    const auto& B = t.node(ib).value.data;
    if (t.requires_grad(ia)) {
      auto ga = t.grad_buffer(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * B[i];
    }
    if (t.requires_grad(ib)) {
      auto gb = t.grad_buffer(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * A[i];
    }
  });
}

Var scale(Var a, double factor) {
  Tensor out = a.value();
  for (double& v : out.data) v *= factor;
  const std::size_t ia = a.id();
  return a.tape().record(OpKind::scale, {ia}, std::move(out), [=](std::span<const double> g, Tape& t) {
    auto ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += factor * g[i];
  });
}

Var sum(Var a) {
  double total = 0.0;
  for (double v : a.value().data) total += v;
  const std::size_t ia = a.id();
  return a.tape().record(OpKind::sum, {ia}, Tensor::scalar(total), [=](std::span<const double> g, Tape& t) {
    for (double& gi : t.grad_buffer(ia)) gi += g[0];
  });
}

Var add_row_bias(Var x, Var bias) {
  Tape& tape = same_tape(x, bias);
  const Tensor& xv = x.value();
  const Tensor& bv = bias.value();
  if (xv.rank() != 2 || bv.numel() != xv.shape[1]) {
    throw DimensionError("add_row_bias: cannot add bias " + shape_str(bv.shape) + " to " + shape_str(xv.shape));
  }
  const std::size_t rows = xv.shape[0], cols = xv.shape[1];
  Tensor out = xv;
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out.data[i * cols + j] += bv.data[j];
  const std::size_t ix = x.id(), ib = bias.id();
  return tape.record(OpKind::add_row_bias, {ix, ib}, std::move(out), [=](std::span<const double> g, Tape& t) {
    if (t.requires_grad(ix)) {
      auto gx = t.grad_buffer(ix);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    }
    if (t.requires_grad(ib)) {
      auto gb = t.grad_buffer(ib);
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) gb[j] += g[i * cols + j];
    }
  });
}

Var conv2d(Var input, Var kernel, std::size_t stride, std::size_t padding) {
  Tape& tape = same_tape(input, kernel);
  const Tensor& in = input.value();
  const Tensor& kv = kernel.value();
  if (in.rank() != 4 || kv.rank() != 4 || kv.shape[2] != kv.shape[3] || in.shape[1] != kv.shape[1]) {
    throw DimensionError("conv2d: incompatible input " + shape_str(in.shape) + " and kernel " + shape_str(kv.shape));
  }
  const std::size_t n_batch = in.shape[0], c_in = in.shape[1], h = in.shape[2], w = in.shape[3];
  const std::size_t c_out = kv.shape[0], k = kv.shape[2];
  const std::size_t h_out = conv_output_size(h, k, stride, padding);
  const std::size_t w_out = conv_output_size(w, k, stride, padding);

  // Visits every (output, input, kernel) triple that lands inside the unpadded input.
  auto for_each_tap = [=](auto&& body) {
    for (std::size_t n = 0; n < n_batch; ++n)
      for (std::size_t o = 0; o < c_out; ++o)
        for (std::size_t oh = 0; oh < h_out; ++oh)
          for (std::size_t ow = 0; ow < w_out; ++ow) {
            const std::size_t out_idx = ((n * c_out + o) * h_out + oh) * w_out + ow;
            for (std::size_t c = 0; c < c_in; ++c)
              for (std::size_t kh = 0; kh < k; ++kh) {
                const std::size_t ih_pad = oh * stride + kh;
                if (ih_pad < padding || ih_pad - padding >= h) continue;
                const std::size_t ih = ih_pad - padding;
                for (std::size_t kw = 0; kw < k; ++kw) {
                  const std::size_t iw_pad = ow * stride + kw;
                  if (iw_pad < padding || iw_pad - padding >= w) continue;
                  const std::size_t iw = iw_pad - padding;
                  const std::size_t in_idx = ((n * c_in + c) * h + ih) * w + iw;
                  const std::size_t k_idx = ((o * c_in + c) * k + kh) * k + kw;
                  body(out_idx, in_idx, k_idx);
                }
              }
          }
  };

  Tensor out({n_batch, c_out, h_out, w_out});
  for_each_tap([&](std::size_t oi, std::size_t ii, std::size_t ki) { out.data[oi] += in.data[ii] * kv.data[ki]; });

  const std::size_t i_in = input.id(), i_k = kernel.id();
  return tape.record(OpKind::conv2d, {i_in, i_k}, std::move(out), [=](std::span<const double> g, Tape& t) {
    const auto& X = t.node(i_in).value.data;
    const auto& K = t.node(i_k).value.data;
    if (t.requires_grad(i_in)) {
      auto gx = t.grad_buffer(i_in);
      for_each_tap([&](std::size_t oi, std::size_t ii, std::size_t ki) { gx[ii] += g[oi] * K[ki]; });
    }
    if (t.requires_grad(i_k)) {
      auto gk = t.grad_buffer(i_k);
      for_each_tap([&](std::size_t oi, std::size_t ii, std::size_t ki) { gk[ki] += g[oi] * X[ii]; });
    }
  });
}

Var add_channel_bias(Var x, Var bias) {
  Tape& tape = same_tape(x, bias);
  const Tensor& xv = x.value();
  const Tensor& bv = bias.value();
  if (xv.rank() != 4 || bv.numel() != xv.shape[1]) {
    throw DimensionError("add_channel_bias: cannot add bias " + shape_str(bv.shape) + " to " + shape_str(xv.shape));
  }
  const std::size_t n_batch = xv.shape[0], channels = xv.shape[1], plane = xv.shape[2] * xv.shape[3];
  Tensor out = xv;
  for (std::size_t n = 0; n < n_batch; ++n)
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t p = 0; p < plane; ++p) out.data[(n * channels + c) * plane + p] += bv.data[c];
  const std::size_t ix = x.id(), ib = bias.id();
  return tape.record(OpKind::add_channel_bias, {ix, ib}, std::move(out), [=](std::span<const double> g, Tape& t) {
    if (t.requires_grad(ix)) {
      auto gx = t.grad_buffer(ix);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    }
    if (t.requires_grad(ib)) {
      auto gb = t.grad_buffer(ib);
      for (std::size_t n = 0; n < n_batch; ++n)
        for (std::size_t c = 0; c < channels; ++c)
          for (std::size_t p = 0; p < plane; ++p) gb[c] += g[(n * channels + c) * plane + p];
    }
  });
}

Var reshape(Var a, Shape shape) {
  if (shape_numel(shape) != a.value().numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  Tensor out(std::move(shape), a.value().data);
  const std::size_t ia = a.id();
  return a.tape().record(OpKind::reshape, {ia}, std::move(out), [=](std::span<const double> g, Tape& t) {
    auto ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

Var relu(Var x) {
  Tensor out = x.value();
  for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  const std::size_t ix = x.id();
  return x.tape().record(OpKind::relu, {ix}, std::move(out), [=](std::span<const double> g, Tape& t) {
    const auto& X = t.node(ix).value.data;
    auto gx = t.grad_buffer(ix);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (X[i] > 0.0) gx[i] += g[i];
    }
  });
}

Var softmax_cross_entropy(Var logits, std::span<const std::size_t> labels) {
  const Tensor& lv = logits.value();
  if (lv.rank() != 2) throw DimensionError("softmax_cross_entropy: logits must be [N x C], got " + shape_str(lv.shape));
  const std::size_t n = lv.shape[0], c = lv.shape[1];
  if (labels.size() != n) {
    throw DimensionError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(n) + " rows");
  }
  std::vector<double> probs(n * c);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] >= c) {
      throw IndexError("softmax_cross_entropy: label " + std::to_string(labels[i]) + " outside [0, " +
                       std::to_string(c) + ")");
    }
    const double* row = lv.data.data() + i * c;
    const double peak = *std::max_element(row, row + c);
    double denom = 0.0;
    for (std::size_t j = 0; j < c; ++j) denom += std::exp(row[j] - peak);
    const double log_denom = std::log(denom);
    for (std::size_t j = 0; j < c; ++j) probs[i * c + j] = std::exp(row[j] - peak - log_denom);
    total += peak + log_denom - row[labels[i]];
  }
  std::vector<std::size_t> saved_labels(labels.begin(), labels.end());
  const std::size_t il = logits.id();
  return logits.tape().record(
      OpKind::softmax_cross_entropy, {il}, Tensor::scalar(total / static_cast<double>(n)),
      [=, probs = std::move(probs), saved_labels = std::move(saved_labels)](std::span<const double> g, Tape& t) {
        auto gl = t.grad_buffer(il);
        const double factor = g[0] / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < c; ++j) {
            const double onehot = j == saved_labels[i] ? 1.0 : 0.0;
            gl[i * c + j] += factor * (probs[i * c + j] - onehot);
          }
      });
}

Var mse_loss(Var pred, Var target) {
  Tape& tape = same_tape(pred, target);
  require_same_shape("mse_loss", pred.value(), target.value());
  const auto& P = pred.value().data;
  const auto& T = target.value().data;
  double total = 0.0;
  for (std::size_t i = 0; i < P.size(); ++i) total += (P[i] - T[i]) * (P[i] - T[i]);
  const double count = static_cast<double>(P.size());
  const std::size_t ip = pred.id(), it = target.id();
  return tape.record(OpKind::mse_loss, {ip, it}, Tensor::scalar(total / count), [=](std::span<const double> g, Tape& t) {
    const auto& Pv = t.node(ip).value.data;
    const auto& Tv = t.node(it).value.data;
    const double factor = 2.0 * g[0] / count;
    if (t.requires_grad(ip)) {
      auto gp = t.grad_buffer(ip);
      for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += factor * (Pv[i] - Tv[i]);
    }
    if (t.requires_grad(it)) {
      auto gt = t.grad_buffer(it);
      for (std::size_t i = 0; i < gt.size(); ++i) gt[i] -= factor * (Pv[i] - Tv[i]);
    }
  });
}

Var group_norms(Var weight, std::optional<Var> bias) {
  const Tensor& wv = weight.value();
  if (wv.rank() < 1) throw DimensionError("group_norms: weight has no group axis");
  const std::size_t groups = wv.shape[0];
  const std::size_t per_group = wv.numel() / groups;
  std::vector<std::size_t> inputs{weight.id()};
  if (bias) {
    same_tape(weight, *bias);
    if (bias->value().numel() != groups) {
      throw DimensionError("group_norms: bias " + shape_str(bias->shape()) + " does not match " + std::to_string(groups) +
                           " groups");
    }
    inputs.push_back(bias->id());
  }
  Tensor out({groups});
  for (std::size_t gi = 0; gi < groups; ++gi) {
    double sq = 0.0;
    for (std::size_t j = 0; j < per_group; ++j) sq += wv.data[gi * per_group + j] * wv.data[gi * per_group + j];
    if (bias) sq += bias->value().data[gi] * bias->value().data[gi];
    out.data[gi] = std::sqrt(sq);
  }
  const std::size_t iw = weight.id();
  const std::optional<std::size_t> ib = bias ? std::optional<std::size_t>(bias->id()) : std::nullopt;
  std::vector<double> norms = out.data;
  return weight.tape().record(
      OpKind::group_norms, std::move(inputs), std::move(out),
      [=, norms = std::move(norms)](std::span<const double> g, Tape& t) {
        const auto& W = t.node(iw).value.data;
        const bool want_w = t.requires_grad(iw);
        const bool want_b = ib && t.requires_grad(*ib);
        std::span<double> gw = want_w ? t.grad_buffer(iw) : std::span<double>();
        std::span<double> gb = want_b ? t.grad_buffer(*ib) : std::span<double>();
        for (std::size_t gi = 0; gi < groups; ++gi) {
          if (norms[gi] < kNormFloor) continue;
          const double factor = g[gi] / norms[gi];
          if (want_w) {
            for (std::size_t j = 0; j < per_group; ++j) gw[gi * per_group + j] += factor * W[gi * per_group + j];
          }
          if (want_b) gb[gi] += factor * t.node(*ib).value.data[gi];
        }
      });
}

Var weighted_sum(Var v, std::span<const double> coefficients) {
  const Tensor& vv = v.value();
  if (vv.numel() != coefficients.size()) {
    throw DimensionError("weighted_sum: " + std::to_string(coefficients.size()) + " coefficients for " +
                         shape_str(vv.shape));
  }
  double total = 0.0;
  for (std::size_t i = 0; i < coefficients.size(); ++i) total += coefficients[i] * vv.data[i];
  std::vector<double> saved(coefficients.begin(), coefficients.end());
  const std::size_t iv = v.id();
  return v.tape().record(OpKind::weighted_sum, {iv}, Tensor::scalar(total),
                         [=, saved = std::move(saved)](std::span<const double> g, Tape& t) {
                           auto gv = t.grad_buffer(iv);
                           for (std::size_t i = 0; i < saved.size(); ++i) gv[i] += g[0] * saved[i];
                         });
}

}  // namespace etp
