#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "etp/config.hpp"
#include "etp/tensor.hpp"

namespace etp {

struct Dataset {
  TaskKind task = TaskKind::classification;
  // [N x features...]
  Tensor features;
  // classification only
  std::vector<std::size_t> labels;
  std::size_t num_classes = 0;
  // regression only: [N x targets]
  Tensor targets;

  std::size_t size() const { return features.numel() == 0 ? 0 : features.dim(0); }
  Dataset subset(std::span<const std::size_t> rows) const;
};

struct DatasetSplit {
  Dataset train;
  Dataset test;
};

// Deterministic in (spec, seed). Features are standardized with statistics
// of the training split only; regression targets are left as generated.
DatasetSplit gen_dataset(const DatasetSpec& spec, std::uint64_t seed);

// Per-instance feature shape the dataset produces.
Shape dataset_feature_shape(const DatasetSpec& spec);

struct EvalResult {
  TaskKind task = TaskKind::classification;
  double accuracy = 0.0;
  double mae = 0.0;
  double mse = 0.0;

  // accuracy for classification, MSE for regression.
  double metric() const { return task == TaskKind::classification ? accuracy : mse; }
};

EvalResult evaluate_predictions(const Tensor& outputs, const Dataset& data);

}  // namespace etp
