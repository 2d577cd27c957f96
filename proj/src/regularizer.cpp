#include "etp/regularizer.hpp"

#include <cmath>
#include <string>

#include "etp/errors.hpp"

namespace etp {

std::string_view to_string(Scheme scheme) {
  switch (scheme) {
    case Scheme::none:
      return "none";
    case Scheme::linear_torque:
      return "linear_torque";
    case Scheme::heaviside:
      return "heaviside";
    case Scheme::exponential_etp:
      return "exponential_etp";
    case Scheme::l1:
      return "l1";
  }
  return "none";
}

Scheme parse_scheme(std::string_view name) {
  for (Scheme s : {Scheme::none, Scheme::linear_torque, Scheme::heaviside, Scheme::exponential_etp, Scheme::l1}) {
    if (to_string(s) == name) return s;
  }
  throw ConfigError("scheme", "unknown regularizer scheme '" + std::string(name) + "'");
}

double resolve_exp_base(std::size_t group_count) {
  if (group_count == 0) throw ContractError("resolve_exp_base: group count must be at least 1");
  return std::exp(5.0 / static_cast<double>(group_count));
}

RegularizerSpec RegularizerSpec::resolved_for(std::size_t group_count) const {
  RegularizerSpec out = *this;
  if (out.scheme == Scheme::exponential_etp && !out.exp_base) out.exp_base = resolve_exp_base(group_count);
  return out;
}

void RegularizerSpec::validate() const {
  if (!(reg_coefficient >= 0.0) || !std::isfinite(reg_coefficient)) {
    throw ContractError("regularizer: reg_coefficient must be a finite non-negative number");
  }
  if (scheme == Scheme::exponential_etp && exp_base && !(*exp_base > 1.0)) {
    throw ContractError("regularizer: exp_base must be greater than 1");
  }
  if (scheme == Scheme::heaviside) {
    if (!heaviside_threshold || !heaviside_force) {
      throw ContractError("regularizer: heaviside scheme needs both a threshold distance and a force");
    }
    if (*heaviside_threshold < 0.0) throw ContractError("regularizer: heaviside threshold must be non-negative");
    if (!(*heaviside_force > 0.0)) throw ContractError("regularizer: heaviside force must be positive");
  }
}

double distance_weight(const RegularizerSpec& spec, double distance) {
  switch (spec.scheme) {
    case Scheme::none:
      return 0.0;
    case Scheme::linear_torque:
      return distance;
    case Scheme::heaviside:
      spec.validate();
      return distance >= *spec.heaviside_threshold ? *spec.heaviside_force : 0.0;
    case Scheme::exponential_etp:
      if (!spec.exp_base) throw ContractError("distance_weight: exponential scheme needs a resolved exp_base");
      return std::pow(*spec.exp_base, distance);
    case Scheme::l1:
      return 1.0;
  }
  return 0.0;
}

std::vector<double> layer_distance_weights(const RegularizerSpec& spec, const GroupIndexing& indexing) {
  const RegularizerSpec resolved = spec.resolved_for(indexing.group_count());
  std::vector<double> weights(indexing.group_count());
  for (std::size_t i = 0; i < weights.size(); ++i) {
    weights[i] = distance_weight(resolved, static_cast<double>(indexing.distance(i)));
  }
  return weights;
}

Var penalty(const RegularizerSpec& spec, const LayerVars& layer, const GroupIndexing& indexing) {
  const Var norms = group_norms(layer.weight, layer.bias);
  if (norms.value().numel() != indexing.group_count()) {
    throw ContractError("penalty: indexing covers " + std::to_string(indexing.group_count()) + " groups, layer has " +
                        std::to_string(norms.value().numel()));
  }
  return weighted_sum(norms, layer_distance_weights(spec, indexing));
}

double penalty_value(const RegularizerSpec& spec, const GroupedLayer& layer, const GroupIndexing& indexing) {
  if (layer.group_count() != indexing.group_count()) {
    throw ContractError("penalty: indexing does not belong to this layer");
  }
  const auto weights = layer_distance_weights(spec, indexing);
  double total = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] != 0.0) total += group_l2_norm(layer, i) * weights[i];
  }
  return total;
}

Var model_penalty(const RegularizerSpec& spec, const ModelGraph& model, std::span<const LayerVars> params,
                  std::span<const GroupIndexing> indexings) {
  if (params.size() != model.layers.size() || indexings.size() != model.layers.size()) {
    throw ContractError("model_penalty: one binding and one indexing per layer required");
  }
  std::optional<Var> total;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    if (!model.layers[l].prunable) continue;
    const Var term = penalty(spec, params[l], indexings[l]);
    total = total ? add(*total, term) : term;
  }
  if (!total) return params[0].weight.tape().constant(Tensor::scalar(0.0));
  return *total;
}

double model_penalty_value(const RegularizerSpec& spec, const ModelGraph& model,
                           std::span<const GroupIndexing> indexings) {
  if (indexings.size() != model.layers.size()) throw ContractError("model_penalty: one indexing per layer required");
  double total = 0.0;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    if (model.layers[l].prunable) total += penalty_value(spec, model.layers[l], indexings[l]);
  }
  return total;
}

Var total_loss(Var task_loss, const RegularizerSpec& spec, const ModelGraph& model, std::span<const LayerVars> params,
               std::span<const GroupIndexing> indexings) {
  if (spec.scheme == Scheme::none || spec.reg_coefficient == 0.0) return task_loss;
  return add(task_loss, scale(model_penalty(spec, model, params, indexings), spec.reg_coefficient));
}

double heaviside_reference_penalty(const GroupedLayer& layer, const GroupIndexing& indexing, double threshold,
                                   double force) {
  RegularizerSpec spec;
  spec.scheme = Scheme::heaviside;
  spec.heaviside_threshold = threshold;
  spec.heaviside_force = force;
  spec.validate();
  return penalty_value(spec, layer, indexing);
}

}  // namespace etp
