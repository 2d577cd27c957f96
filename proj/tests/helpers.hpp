#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "etp/model.hpp"
#include "etp/tensor.hpp"

namespace etp::test {

// Single dense layer with the given rows; bias left empty when not given.
inline GroupedLayer dense_layer(std::size_t out, std::size_t in, std::vector<double> weights,
                                std::vector<double> bias = {}) {
  GroupedLayer layer;
  layer.kind = LayerKind::dense;
  layer.weight = Tensor({out, in}, std::move(weights));
  if (!bias.empty()) layer.bias = Tensor({out}, std::move(bias));
  return layer;
}

inline Tensor random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor t(std::move(shape));
  for (auto& v : t.data) v = dist(gen);
  return t;
}

inline ArchSpec mlp(std::vector<std::size_t> widths, Activation hidden = Activation::relu) {
  ArchSpec arch;
  arch.input_shape = {widths.front()};
  for (std::size_t i = 1; i < widths.size(); ++i) {
    LayerSpec spec;
    spec.out = widths[i];
    spec.activation = i + 1 < widths.size() ? hidden : Activation::none;
    arch.layers.push_back(spec);
  }
  return arch;
}

}  // namespace etp::test
