#include "etp/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "etp/errors.hpp"
#include "etp/rng.hpp"

namespace etp {

namespace {

std::string layer_name(std::size_t l) { return "layer " + std::to_string(l); }

FlattenMapping make_flatten(const Shape& chw) {
  FlattenMapping map{chw[0], chw[1], chw[2], {}};
  const std::size_t plane = chw[1] * chw[2];
  map.channel_columns.resize(chw[0]);
  for (std::size_t c = 0; c < chw[0]; ++c) {
    map.channel_columns[c].resize(plane);
    std::iota(map.channel_columns[c].begin(), map.channel_columns[c].end(), c * plane);
  }
  return map;
}

}  // namespace

std::size_t ModelGraph::total_groups() const {
  std::size_t total = 0;
  for (const auto& layer : layers) total += layer.group_count();
  return total;
}

std::vector<Shape> ModelGraph::layer_input_shapes() const {
  std::vector<Shape> shapes;
  Shape current = input_shape;
  for (const auto& layer : layers) {
    if (layer.kind == LayerKind::dense) {
      if (current.size() == 3) current = Shape{current[0] * current[1] * current[2]};
      shapes.push_back(current);
      current = Shape{layer.group_count()};
    } else {
      shapes.push_back(current);
      if (current.size() != 3) throw ConstructionError("conv2d layer needs a [C x H x W] input");
      const std::size_t k = layer.kernel_size();
      current = Shape{layer.group_count(), conv_output_size(current[1], k, layer.stride, layer.padding),
                      conv_output_size(current[2], k, layer.stride, layer.padding)};
    }
  }
  return shapes;
}

Shape ModelGraph::output_shape() const {
  if (layers.empty()) return input_shape;
  const auto shapes = layer_input_shapes();
  const auto& last = layers.back();
  if (last.kind == LayerKind::dense) return Shape{last.group_count()};
  const auto& in = shapes.back();
  const std::size_t k = last.kernel_size();
  return Shape{last.group_count(), conv_output_size(in[1], k, last.stride, last.padding),
               conv_output_size(in[2], k, last.stride, last.padding)};
}

void finalize_model(ModelGraph& model) {
  if (model.input_shape.size() != 1 && model.input_shape.size() != 3) {
    throw ConstructionError("input shape must be [features] or [C x H x W], got " + shape_str(model.input_shape));
  }
  if (model.layers.empty()) throw ConstructionError("model has no layers");

  model.flattens.assign(model.layers.size(), std::nullopt);
  Shape current = model.input_shape;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& layer = model.layers[l];
    if (layer.weight.numel() == 0) throw ConstructionError(layer_name(l) + " has no weights");
    if (layer.has_bias() && layer.bias.numel() != layer.group_count()) {
      throw ConstructionError(layer_name(l) + " bias " + shape_str(layer.bias.shape) + " does not match " +
                              std::to_string(layer.group_count()) + " groups");
    }
    if (layer.kind == LayerKind::dense) {
      if (layer.weight.rank() != 2) throw ConstructionError(layer_name(l) + ": dense weight must be [out x in]");
      if (current.size() == 3) {
        model.flattens[l] = make_flatten(current);
        current = Shape{current[0] * current[1] * current[2]};
      }
      if (layer.input_width() != current[0]) {
        throw ConstructionError(layer_name(l) + " expects " + std::to_string(layer.input_width()) +
                                " inputs but receives " + std::to_string(current[0]));
      }
      current = Shape{layer.group_count()};
    } else {
      const auto& w = layer.weight;
      if (w.rank() != 4 || w.shape[2] != w.shape[3]) {
        throw ConstructionError(layer_name(l) + ": conv weight must be [C_out x C_in x K x K]");
      }
      if (current.size() != 3) throw ConstructionError(layer_name(l) + ": conv2d needs a [C x H x W] input");
      if (w.shape[1] != current[0]) {
        throw ConstructionError(layer_name(l) + " expects " + std::to_string(w.shape[1]) + " channels but receives " +
                                std::to_string(current[0]));
      }
      try {
        current = Shape{layer.group_count(), conv_output_size(current[1], w.shape[2], layer.stride, layer.padding),
                        conv_output_size(current[2], w.shape[2], layer.stride, layer.padding)};
      } catch (const DimensionError& e) {
        throw ConstructionError(layer_name(l) + ": " + e.what());
      }
    }
  }

  model.couplings.clear();
  for (std::size_t l = 0; l + 1 < model.layers.size(); ++l) {
    Coupling coupling;
    coupling.producer = l;
    coupling.consumer = l + 1;
    const std::size_t groups = model.layers[l].group_count();
    if (model.layers[l + 1].kind == LayerKind::conv2d) {
      coupling.axis = SliceAxis::conv_input_channel;
      for (std::size_t i = 0; i < groups; ++i) coupling.slices.push_back({i});
    } else if (model.flattens[l + 1]) {
      coupling.axis = SliceAxis::dense_column;
      coupling.slices = model.flattens[l + 1]->channel_columns;
    } else {
      coupling.axis = SliceAxis::dense_column;
      for (std::size_t i = 0; i < groups; ++i) coupling.slices.push_back({i});
    }
    model.couplings.push_back(std::move(coupling));
  }
}

ModelGraph build_model(const ArchSpec& spec, std::uint64_t seed) {
  ModelGraph model;
  model.input_shape = spec.input_shape;
  if (spec.layers.empty()) throw ConstructionError("architecture has no layers");
  if (spec.input_shape.size() != 1 && spec.input_shape.size() != 3) {
    throw ConstructionError("input shape must be [features] or [C x H x W], got " + shape_str(spec.input_shape));
  }

  std::mt19937_64 gen(derive_seed(seed, kStreamInit));
  Shape current = spec.input_shape;
  for (std::size_t l = 0; l < spec.layers.size(); ++l) {
    const auto& ls = spec.layers[l];
    if (ls.out == 0) throw ConstructionError(layer_name(l) + " has zero outputs");
    GroupedLayer layer;
    layer.kind = ls.kind;
    layer.activation = ls.activation;
    layer.stride = ls.stride;
    layer.padding = ls.padding;
    layer.prunable = (l + 1 < spec.layers.size()) || spec.prune_output_layer;

    if (ls.kind == LayerKind::dense) {
      const std::size_t available = current.size() == 3 ? current[0] * current[1] * current[2] : current[0];
      const std::size_t in = ls.in == 0 ? available : ls.in;
      if (in != available) {
        throw ConstructionError(layer_name(l) + " declares " + std::to_string(in) + " inputs but the previous layer produces " +
                                std::to_string(available));
      }
      layer.weight = Tensor({ls.out, in});
      current = Shape{ls.out};
    } else {
      if (current.size() != 3) throw ConstructionError(layer_name(l) + ": conv2d needs a [C x H x W] input");
      const std::size_t in = ls.in == 0 ? current[0] : ls.in;
      if (in != current[0]) {
        throw ConstructionError(layer_name(l) + " declares " + std::to_string(in) + " input channels but receives " +
                                std::to_string(current[0]));
      }
      if (ls.kernel == 0) throw ConstructionError(layer_name(l) + " has kernel size 0");
      layer.weight = Tensor({ls.out, in, ls.kernel, ls.kernel});
      try {
        current = Shape{ls.out, conv_output_size(current[1], ls.kernel, ls.stride, ls.padding),
                        conv_output_size(current[2], ls.kernel, ls.stride, ls.padding)};
      } catch (const Error& e) {
        throw ConstructionError(layer_name(l) + ": " + e.what());
      }
    }

    const double fan_in = static_cast<double>(layer.fan_in());
    std::uniform_real_distribution<double> weight_dist(-std::sqrt(6.0 / fan_in), std::sqrt(6.0 / fan_in));
    for (double& v : layer.weight.data) v = weight_dist(gen);
    if (ls.bias) {
      std::uniform_real_distribution<double> bias_dist(-1.0 / std::sqrt(fan_in), 1.0 / std::sqrt(fan_in));
      layer.bias = Tensor({ls.out});
      for (double& v : layer.bias.data) v = bias_dist(gen);
    }
    layer.weight.requires_grad = true;
    layer.bias.requires_grad = ls.bias;
    model.layers.push_back(std::move(layer));
  }
  finalize_model(model);
  return model;
}

std::size_t GroupIndexing::distance(std::size_t group) const {
  const std::size_t rho = assigned_indices.at(group);
  return rho > pivot_index ? rho - pivot_index : pivot_index - rho;
}

std::vector<std::size_t> GroupIndexing::distances() const {
  std::vector<std::size_t> out(assigned_indices.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = distance(i);
  return out;
}

GroupIndexing assign_indexing(std::size_t group_count, IndexingStrategy strategy, std::uint64_t seed) {
  if (group_count == 0) throw ContractError("assign_indexing: layer has no groups");
  GroupIndexing indexing;
  indexing.strategy = strategy;
  indexing.seed = seed;
  indexing.assigned_indices.resize(group_count);
  std::iota(indexing.assigned_indices.begin(), indexing.assigned_indices.end(), std::size_t{0});
  if (strategy == IndexingStrategy::random) {
    std::mt19937_64 gen(seed);
    std::shuffle(indexing.assigned_indices.begin(), indexing.assigned_indices.end(), gen);
  }
  indexing.pivot_index = indexing.assigned_indices[0];
  return indexing;
}

GroupIndexing assign_indexing(const GroupedLayer& layer, IndexingStrategy strategy, std::uint64_t seed) {
  return assign_indexing(layer.group_count(), strategy, seed);
}

std::vector<GroupIndexing> assign_model_indexing(const ModelGraph& model, IndexingStrategy strategy,
                                                 std::uint64_t seed) {
  std::vector<GroupIndexing> out;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    out.push_back(assign_indexing(model.layers[l], strategy, derive_seed(seed, kStreamIndexing + 16 * l)));
  }
  return out;
}

double group_l2_norm(const GroupedLayer& layer, std::size_t group) {
  if (group >= layer.group_count()) {
    throw IndexError("group " + std::to_string(group) + " out of range for " + std::to_string(layer.group_count()) +
                     " groups");
  }
  const std::size_t per_group = layer.fan_in();
  double sq = 0.0;
  for (std::size_t j = 0; j < per_group; ++j) {
    const double v = layer.weight.data[group * per_group + j];
    sq += v * v;
  }
  if (layer.has_bias()) sq += layer.bias.data[group] * layer.bias.data[group];
  return std::sqrt(sq);
}

std::vector<double> group_l2_norms(const GroupedLayer& layer) {
  std::vector<double> out(layer.group_count());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = group_l2_norm(layer, i);
  return out;
}

std::vector<LayerVars> bind_parameters(Tape& tape, ModelGraph& model) {
  std::vector<LayerVars> out;
  out.reserve(model.layers.size());
  for (auto& layer : model.layers) {
    LayerVars vars{tape.watch(layer.weight), std::nullopt};
    if (layer.has_bias()) vars.bias = tape.watch(layer.bias);
    out.push_back(vars);
  }
  return out;
}

std::vector<LayerVars> bind_constants(Tape& tape, const ModelGraph& model) {
  std::vector<LayerVars> out;
  out.reserve(model.layers.size());
  for (const auto& layer : model.layers) {
    LayerVars vars{tape.constant(layer.weight), std::nullopt};
    if (layer.has_bias()) vars.bias = tape.constant(layer.bias);
    out.push_back(vars);
  }
  return out;
}

Var group_l2_norm(const LayerVars& layer, std::size_t group) {
  const Var norms = group_norms(layer.weight, layer.bias);
  const std::size_t groups = norms.value().numel();
  if (group >= groups) {
    throw IndexError("group " + std::to_string(group) + " out of range for " + std::to_string(groups) + " groups");
  }
  std::vector<double> select(groups, 0.0);
  select[group] = 1.0;
  return weighted_sum(norms, select);
}

Var forward(const ModelGraph& model, std::span<const LayerVars> params, Var batch) {
  if (params.size() != model.layers.size()) throw ContractError("forward: parameter binding does not match the model");
  const Shape& in = batch.shape();
  const bool shape_ok =
      in.size() == model.input_shape.size() + 1 && std::equal(model.input_shape.begin(), model.input_shape.end(), in.begin() + 1);
  if (!shape_ok) {
    throw DimensionError("forward: expected batch [N x " + shape_str(model.input_shape).substr(1) + ", got " +
                         shape_str(in));
  }
  const std::size_t n = in[0];
  Var x = batch;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& layer = model.layers[l];
    if (layer.kind == LayerKind::dense) {
      if (model.flattens[l]) {
        const auto& f = *model.flattens[l];
        x = reshape(x, Shape{n, f.channels * f.height * f.width});
      }
      x = matmul(x, transpose(params[l].weight));
      if (params[l].bias) x = add_row_bias(x, *params[l].bias);
    } else {
      x = conv2d(x, params[l].weight, layer.stride, layer.padding);
      if (params[l].bias) x = add_channel_bias(x, *params[l].bias);
    }
    if (layer.activation == Activation::relu) x = relu(x);
  }
  return x;
}

Tensor predict(const ModelGraph& model, const Tensor& batch) {
  Tape tape;
  const auto params = bind_constants(tape, model);
  return forward(model, params, tape.constant(batch)).value();
}

std::vector<SliceRef> coupled_slices(const ModelGraph& model, std::size_t layer, std::size_t group) {
  if (layer >= model.layers.size()) throw IndexError("coupled_slices: " + layer_name(layer) + " does not exist");
  if (group >= model.layers[layer].group_count()) {
    throw IndexError("coupled_slices: group " + std::to_string(group) + " out of range in " + layer_name(layer));
  }
  if (layer >= model.couplings.size()) return {};
  const auto& c = model.couplings[layer];
  return {SliceRef{c.consumer, c.axis, c.slices[group]}};
}

std::vector<Tensor*> parameters(ModelGraph& model) {
  std::vector<Tensor*> out;
  for (auto& layer : model.layers) {
    out.push_back(&layer.weight);
    if (layer.has_bias()) out.push_back(&layer.bias);
  }
  return out;
}

std::size_t parameter_count(const ModelGraph& model) {
  std::size_t total = 0;
  for (const auto& layer : model.layers) total += layer.weight.numel() + layer.bias.numel();
  return total;
}

}  // namespace etp
