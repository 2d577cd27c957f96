#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "etp/tensor.hpp"

namespace etp {

enum class OptimizerKind { sgd_momentum, adam, adamw };

std::string_view to_string(OptimizerKind kind);
OptimizerKind parse_optimizer(std::string_view name);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::sgd_momentum;
  double lr = 0.01;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Coupled (added to the gradient) for sgd_momentum and adam, decoupled for adamw.
  double weight_decay = 0.0;
};

class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig config);

  void set_lr(double lr) noexcept { config_.lr = lr; }
  double lr() const noexcept { return config_.lr; }
  std::size_t step_count() const noexcept { return step_count_; }
  const OptimizerConfig& config() const noexcept { return config_; }

  // Updates every parameter from its grad, then clears the grads. The same
  // parameter list (same order and sizes) must be passed on every call.
  void step(std::span<Tensor* const> params);

 private:
  OptimizerConfig config_;
  std::size_t step_count_ = 0;
  // First moment (sgd velocity / adam m) and second moment (adam v).
  std::vector<std::vector<double>> first_;
  std::vector<std::vector<double>> second_;
};

enum class ScheduleKind { constant, multistep, step, cosine, linear_warmup_decay };

std::string_view to_string(ScheduleKind kind);
ScheduleKind parse_schedule(std::string_view name);

struct LrSchedule {
  ScheduleKind kind = ScheduleKind::constant;
  std::vector<std::size_t> milestones;
  double gamma = 0.1;
  std::size_t step_size = 30;
  std::size_t t_max = 1;
  double warmup_fraction = 0.1;
  std::size_t total_steps = 1;
};

// Learning rate at epoch (or step, for warmup schedules) `t`.
double lr_at(const LrSchedule& schedule, double base_lr, std::size_t t);

}  // namespace etp
