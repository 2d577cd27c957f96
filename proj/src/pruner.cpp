#include "etp/pruner.hpp"

#include <algorithm>
#include <string>

#include "etp/errors.hpp"

namespace etp {

namespace {

// Per layer, which groups are removed. Validates the removal list.
std::vector<std::vector<bool>> removal_masks(const ModelGraph& model, std::span<const GroupRef> removals) {
  std::vector<std::vector<bool>> removed(model.layers.size());
  for (std::size_t l = 0; l < model.layers.size(); ++l) removed[l].assign(model.layers[l].group_count(), false);
  for (const auto& r : removals) {
    if (r.layer >= model.layers.size() || r.group >= model.layers[r.layer].group_count()) {
      throw ConstructionError("prune plan references missing group (" + std::to_string(r.layer) + ", " +
                              std::to_string(r.group) + ")");
    }
    if (!model.layers[r.layer].prunable) {
      throw ConstructionError("prune plan removes group (" + std::to_string(r.layer) + ", " + std::to_string(r.group) +
                              ") of non-prunable layer " + std::to_string(r.layer));
    }
    if (removed[r.layer][r.group]) {
      throw ConstructionError("prune plan removes group (" + std::to_string(r.layer) + ", " + std::to_string(r.group) +
                              ") twice");
    }
    removed[r.layer][r.group] = true;
  }
  for (std::size_t l = 0; l < removed.size(); ++l) {
    if (std::all_of(removed[l].begin(), removed[l].end(), [](bool b) { return b; })) {
      throw ConstructionError("prune plan empties layer " + std::to_string(l));
    }
  }
  return removed;
}

std::vector<std::size_t> kept_indices(const std::vector<bool>& removed) {
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < removed.size(); ++i) {
    if (!removed[i]) kept.push_back(i);
  }
  return kept;
}

void finish_plan(const ModelGraph& model, PrunePlan& plan) {
  std::sort(plan.removals.begin(), plan.removals.end());
  const auto base = count_macs(model);
  const auto pruned = count_macs_after(model, plan.removals);
  plan.predicted_macs = pruned.total;
  plan.predicted_speedup = speedup(base, pruned);
}

}  // namespace

std::string_view to_string(PruneMode mode) { return mode == PruneMode::threshold ? "threshold" : "budget"; }

MacsReport count_macs_after(const ModelGraph& model, std::span<const GroupRef> removals) {
  const auto removed = removal_masks(model, removals);
  const auto input_shapes = model.layer_input_shapes();
  MacsReport report;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& layer = model.layers[l];
    const std::uint64_t out = std::count(removed[l].begin(), removed[l].end(), false);
    std::uint64_t in = layer.input_width();
    if (l > 0) {
      const auto& coupling = model.couplings[l - 1];
      for (std::size_t g = 0; g < removed[l - 1].size(); ++g) {
        if (removed[l - 1][g]) in -= coupling.slices[g].size();
      }
    }
    std::uint64_t macs = out * in;
    if (layer.kind == LayerKind::conv2d) {
      const auto& shape = input_shapes[l];
      const std::size_t k = layer.kernel_size();
      const std::uint64_t h_out = conv_output_size(shape[1], k, layer.stride, layer.padding);
      const std::uint64_t w_out = conv_output_size(shape[2], k, layer.stride, layer.padding);
      macs *= static_cast<std::uint64_t>(k) * k * h_out * w_out;
    }
    report.per_layer.push_back(macs);
    report.total += macs;
  }
  return report;
}

MacsReport count_macs(const ModelGraph& model) { return count_macs_after(model, {}); }

double speedup(const MacsReport& base, const MacsReport& pruned) {
  if (pruned.total == 0) throw ContractError("speedup: pruned model has zero MACs");
  return static_cast<double>(base.total) / static_cast<double>(pruned.total);
}

double accuracy_drop(double base_metric, double pruned_metric) { return pruned_metric - base_metric; }

PrunePlan plan_by_threshold(const ModelGraph& model, double tau) {
  if (!(tau >= 0.0)) throw ContractError("plan_by_threshold: tau must be non-negative");
  PrunePlan plan;
  plan.mode = PruneMode::threshold;
  plan.threshold_used = tau;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& layer = model.layers[l];
    if (!layer.prunable) continue;
    const auto norms = group_l2_norms(layer);
    std::vector<std::size_t> below;
    for (std::size_t i = 0; i < norms.size(); ++i) {
      if (norms[i] < tau) below.push_back(i);
    }
    if (below.size() == norms.size()) {
      // Last element in (norm, index) order survives.
      std::size_t keep = 0;
      for (std::size_t i = 1; i < norms.size(); ++i) {
        if (norms[i] >= norms[keep]) keep = i;
      }
      std::erase(below, keep);
    }
    for (std::size_t i : below) plan.removals.push_back({l, i});
  }
  finish_plan(model, plan);
  return plan;
}

PrunePlan plan_by_budget(const ModelGraph& model, double target_speedup) {
  if (!(target_speedup >= 1.0)) throw ContractError("plan_by_budget: target speed-up must be at least 1");

  struct Candidate {
    double norm;
    GroupRef ref;
  };
  std::vector<Candidate> order;
  std::vector<std::size_t> remaining(model.layers.size(), 0);
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    if (!model.layers[l].prunable) continue;
    const auto norms = group_l2_norms(model.layers[l]);
    for (std::size_t i = 0; i < norms.size(); ++i) order.push_back({norms[i], {l, i}});
    remaining[l] = norms.size();
  }
  std::sort(order.begin(), order.end(), [](const Candidate& a, const Candidate& b) {
    if (a.norm != b.norm) return a.norm < b.norm;
    return a.ref < b.ref;
  });
  std::vector<Candidate> removable;
  for (const auto& c : order) {
    if (remaining[c.ref.layer] == 1) continue;
    --remaining[c.ref.layer];
    removable.push_back(c);
  }

  const auto base = count_macs(model);
  auto speedup_of_prefix = [&](std::size_t k) {
    std::vector<GroupRef> refs;
    for (std::size_t i = 0; i < k; ++i) refs.push_back(removable[i].ref);
    return speedup(base, count_macs_after(model, refs));
  };

  const double max_speedup = speedup_of_prefix(removable.size());
  if (max_speedup < target_speedup) throw UnreachableTarget(target_speedup, max_speedup);

  // Speed-up is non-decreasing in the prefix length.
  std::size_t lo = 0, hi = removable.size();
  while (lo < hi) {
    const std::size_t mid = lo + (hi - lo) / 2;
    if (speedup_of_prefix(mid) >= target_speedup) {
      hi = mid;
    } else {
      lo = mid + 1;
    }
  }

  PrunePlan plan;
  plan.mode = PruneMode::budget;
  for (std::size_t i = 0; i < lo; ++i) plan.removals.push_back(removable[i].ref);
  plan.threshold_used = lo > 0 ? removable[lo - 1].norm : 0.0;
  finish_plan(model, plan);
  return plan;
}

ModelGraph apply_plan(const ModelGraph& model, const PrunePlan& plan) {
  const auto removed = removal_masks(model, plan.removals);
  ModelGraph out;
  out.input_shape = model.input_shape;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& src = model.layers[l];
    const auto rows = kept_indices(removed[l]);

    std::vector<bool> dropped_inputs(src.input_width(), false);
    if (l > 0) {
      const auto& coupling = model.couplings[l - 1];
      for (std::size_t g = 0; g < removed[l - 1].size(); ++g) {
        if (!removed[l - 1][g]) continue;
        for (std::size_t idx : coupling.slices[g]) dropped_inputs.at(idx) = true;
      }
    }
    const auto cols = kept_indices(dropped_inputs);

    GroupedLayer dst;
    dst.kind = src.kind;
    dst.activation = src.activation;
    dst.stride = src.stride;
    dst.padding = src.padding;
    dst.prunable = src.prunable;
    const std::size_t inner = src.kind == LayerKind::conv2d ? src.kernel_size() * src.kernel_size() : 1;
    const std::size_t src_in = src.input_width();
    Shape shape = src.weight.shape;
    shape[0] = rows.size();
    shape[1] = cols.size();
    std::vector<double> values;
    values.reserve(rows.size() * cols.size() * inner);
    for (std::size_t r : rows)
      for (std::size_t c : cols) {
        const std::size_t offset = (r * src_in + c) * inner;
        values.insert(values.end(), src.weight.data.begin() + offset, src.weight.data.begin() + offset + inner);
      }
    dst.weight = Tensor(shape, std::move(values));
    dst.weight.requires_grad = src.weight.requires_grad;
    if (src.has_bias()) {
      std::vector<double> bias;
      for (std::size_t r : rows) bias.push_back(src.bias.data[r]);
      dst.bias = Tensor({rows.size()}, std::move(bias));
      dst.bias.requires_grad = src.bias.requires_grad;
    }
    out.layers.push_back(std::move(dst));
  }
  finalize_model(out);
  return out;
}

}  // namespace etp
