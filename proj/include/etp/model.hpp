#pragma once

// Sequential networks whose parameters are partitioned into prunable groups.
//
// A group is one output slice of a layer: a dense neuron's fan-in row or a
// convolution filter, together with its bias entry. Removing group i of
// layer l also removes the input slice of layer l + 1 that group i feeds;
// those dependencies are stored explicitly as Couplings.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "etp/autograd.hpp"
#include "etp/tensor.hpp"

namespace etp {

enum class LayerKind { dense, conv2d };
enum class Activation { none, relu };

struct GroupedLayer {
  LayerKind kind = LayerKind::dense;
  // dense: [out x in]; conv2d: [C_out x C_in x K x K]. Groups live on axis 0.
  Tensor weight;
  // [out], or empty when the layer has no bias.
  Tensor bias;
  Activation activation = Activation::none;
  std::size_t stride = 1;
  std::size_t padding = 0;
  // Output layers are usually excluded from regularization and pruning.
  bool prunable = true;

  bool has_bias() const noexcept { return bias.numel() > 0; }
  std::size_t group_count() const { return weight.dim(0); }
  // dense: fan-in columns; conv2d: input channels.
  std::size_t input_width() const { return weight.dim(1); }
  std::size_t kernel_size() const { return kind == LayerKind::conv2d ? weight.dim(2) : 1; }
  std::size_t fan_in() const { return weight.numel() / group_count(); }
};

// Channel-major flatten between a conv output [C x H x W] and a dense input.
struct FlattenMapping {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  // channel_columns[c] = dense input columns fed by channel c.
  std::vector<std::vector<std::size_t>> channel_columns;
};

enum class SliceAxis { dense_column, conv_input_channel };

struct SliceRef {
  std::size_t layer = 0;
  SliceAxis axis = SliceAxis::dense_column;
  std::vector<std::size_t> indices;

  bool operator==(const SliceRef&) const = default;
};

// Removing group i of `producer` requires removing slices[i] of `consumer`.
struct Coupling {
  std::size_t producer = 0;
  std::size_t consumer = 0;
  SliceAxis axis = SliceAxis::dense_column;
  std::vector<std::vector<std::size_t>> slices;
};

struct ModelGraph {
  // Per-instance input shape: [features] or [C x H x W].
  Shape input_shape;
  std::vector<GroupedLayer> layers;
  // flattens[l] is set when a flatten precedes layer l.
  std::vector<std::optional<FlattenMapping>> flattens;
  std::vector<Coupling> couplings;

  std::size_t total_groups() const;
  // Per-instance input shape of every layer.
  std::vector<Shape> layer_input_shapes() const;
  Shape output_shape() const;
};

struct LayerSpec {
  LayerKind kind = LayerKind::dense;
  std::size_t out = 1;
  // Declared input width; 0 means infer from the previous layer.
  std::size_t in = 0;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t padding = 0;
  Activation activation = Activation::none;
  bool bias = true;
};

struct ArchSpec {
  Shape input_shape;
  std::vector<LayerSpec> layers;
  bool prune_output_layer = false;
};

// Builds and initializes a model (Kaiming-uniform weights, seeded).
ModelGraph build_model(const ArchSpec& spec, std::uint64_t seed);

// Derives flatten mappings and couplings from the layers and checks every
// structural invariant. Throws ConstructionError.
void finalize_model(ModelGraph& model);

enum class IndexingStrategy { natural, random };

struct GroupIndexing {
  IndexingStrategy strategy = IndexingStrategy::natural;
  std::uint64_t seed = 0;
  // assigned_indices[i] is the index of group i; a permutation of 0..G-1.
  std::vector<std::size_t> assigned_indices;
  // Always the assigned index of group 0.
  std::size_t pivot_index = 0;

  std::size_t group_count() const noexcept { return assigned_indices.size(); }
  std::size_t distance(std::size_t group) const;
  std::vector<std::size_t> distances() const;
};

GroupIndexing assign_indexing(std::size_t group_count, IndexingStrategy strategy, std::uint64_t seed);
GroupIndexing assign_indexing(const GroupedLayer& layer, IndexingStrategy strategy, std::uint64_t seed);
// One indexing per layer; layer l under the random strategy uses a seed
// derived from (seed, l).
std::vector<GroupIndexing> assign_model_indexing(const ModelGraph& model, IndexingStrategy strategy,
                                                 std::uint64_t seed);

double group_l2_norm(const GroupedLayer& layer, std::size_t group);
std::vector<double> group_l2_norms(const GroupedLayer& layer);

// Tape handles for one layer's parameters.
struct LayerVars {
  Var weight;
  std::optional<Var> bias;
};

// Watches every parameter of the model on `tape`. The model must outlive the
// tape's backward pass.
std::vector<LayerVars> bind_parameters(Tape& tape, ModelGraph& model);
// Same, but as constants (no gradients).
std::vector<LayerVars> bind_constants(Tape& tape, const ModelGraph& model);

// Differentiable norm of one group (bias entry included).
Var group_l2_norm(const LayerVars& layer, std::size_t group);

// batch: [N x input_shape...].
Var forward(const ModelGraph& model, std::span<const LayerVars> params, Var batch);
// Gradient-free forward pass.
Tensor predict(const ModelGraph& model, const Tensor& batch);

std::vector<SliceRef> coupled_slices(const ModelGraph& model, std::size_t layer, std::size_t group);

// Every trainable tensor in layer order (weight, then bias).
std::vector<Tensor*> parameters(ModelGraph& model);
std::size_t parameter_count(const ModelGraph& model);

}  // namespace etp
