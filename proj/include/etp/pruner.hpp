#pragma once

// Structural pruning: choose low-norm groups, slice them (and the input
// slices they feed) out of the model, and account multiply-accumulates.

#include <compare>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "etp/model.hpp"

namespace etp {

struct GroupRef {
  std::size_t layer = 0;
  std::size_t group = 0;

  auto operator<=>(const GroupRef&) const = default;
};

enum class PruneMode { threshold, budget };

std::string_view to_string(PruneMode mode);

struct PrunePlan {
  // Sorted by (layer, group), no duplicates.
  std::vector<GroupRef> removals;
  PruneMode mode = PruneMode::threshold;
  // threshold mode: the tau passed in; budget mode: the largest removed norm
  // (0 for an empty plan).
  double threshold_used = 0.0;
  double predicted_speedup = 1.0;
  std::uint64_t predicted_macs = 0;
};

struct MacsReport {
  std::vector<std::uint64_t> per_layer;
  std::uint64_t total = 0;
};

// Multiply-accumulates of one forward pass at batch size 1; biases and
// activations are not counted.
MacsReport count_macs(const ModelGraph& model);
// MACs of the model as it would be after removing `removals` (shape-only).
MacsReport count_macs_after(const ModelGraph& model, std::span<const GroupRef> removals);

double speedup(const MacsReport& base, const MacsReport& pruned);
// pruned - base; positive means the pruned model is better.
double accuracy_drop(double base_metric, double pruned_metric);

// Removes every prunable group with norm strictly below tau. A layer that
// would be emptied keeps its largest-norm group (highest index among ties).
PrunePlan plan_by_threshold(const ModelGraph& model, double tau);

// Smallest removal set reaching speed-up >= target. Groups are removed in
// ascending (norm, layer, group) order, skipping each layer's last survivor.
// Throws UnreachableTarget when even the maximal plan falls short.
PrunePlan plan_by_budget(const ModelGraph& model, double target_speedup);

// New model without the planned groups and their coupled input slices.
// The input model is untouched. Throws ConstructionError for invalid plans.
ModelGraph apply_plan(const ModelGraph& model, const PrunePlan& plan);

}  // namespace etp
