#pragma once

// Distance-weighted group penalties.
//
// Every scheme has the form  sum_l sum_i ||w_i^l||_2 * weight(d_i^l),
// where d_i^l is the group's distance from its layer's pivot:
//   linear_torque    weight(d) = d
//   heaviside        weight(d) = force * [d >= threshold]
//   exponential_etp  weight(d) = exp_base^d,  exp_base = exp(5 / |G_l|) by default
//   l1               weight(d) = 1            (plain group lasso)
// The training objective is  task_loss + reg_coefficient * penalty.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "etp/autograd.hpp"
#include "etp/model.hpp"

namespace etp {

enum class Scheme { none, linear_torque, heaviside, exponential_etp, l1 };

std::string_view to_string(Scheme scheme);
// Throws ConfigError for unknown names.
Scheme parse_scheme(std::string_view name);

struct RegularizerSpec {
  Scheme scheme = Scheme::none;
  double reg_coefficient = 0.0;
  // Global override of the exponential base; resolved per layer when absent.
  std::optional<double> exp_base;
  std::optional<double> heaviside_threshold;
  std::optional<double> heaviside_force;

  // Copy with exp_base filled in for a layer of `group_count` groups.
  RegularizerSpec resolved_for(std::size_t group_count) const;
  // Throws ContractError when the scheme's coefficients are missing or invalid.
  void validate() const;
};

// Default exponential base exp(5 / group_count).
double resolve_exp_base(std::size_t group_count);

// Requires a resolved spec for the exponential scheme.
double distance_weight(const RegularizerSpec& spec, double distance);

// weight(d_i) for every group of a layer, resolving exp_base for that layer.
std::vector<double> layer_distance_weights(const RegularizerSpec& spec, const GroupIndexing& indexing);

// Differentiable penalty of one layer.
Var penalty(const RegularizerSpec& spec, const LayerVars& layer, const GroupIndexing& indexing);
double penalty_value(const RegularizerSpec& spec, const GroupedLayer& layer, const GroupIndexing& indexing);

// Sum of layer penalties over the model's prunable layers.
Var model_penalty(const RegularizerSpec& spec, const ModelGraph& model, std::span<const LayerVars> params,
                  std::span<const GroupIndexing> indexings);
double model_penalty_value(const RegularizerSpec& spec, const ModelGraph& model,
                           std::span<const GroupIndexing> indexings);

// task_loss + reg_coefficient * model_penalty. Returns task_loss itself for
// scheme none or a zero coefficient.
Var total_loss(Var task_loss, const RegularizerSpec& spec, const ModelGraph& model, std::span<const LayerVars> params,
               std::span<const GroupIndexing> indexings);

// Value of the idealized step-function penalty; for analysis only.
double heaviside_reference_penalty(const GroupedLayer& layer, const GroupIndexing& indexing, double threshold,
                                   double force);

// The coefficient grid swept by default.
inline constexpr double kDefaultBetaGrid[] = {1e-6, 5e-6, 1e-5, 5e-5, 1e-4, 5e-4, 1e-3};

}  // namespace etp
