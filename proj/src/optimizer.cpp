#include "etp/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <utility>

#include "etp/errors.hpp"

namespace etp {

std::string_view to_string(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::sgd_momentum:
      return "sgd_momentum";
    case OptimizerKind::adam:
      return "adam";
    case OptimizerKind::adamw:
      return "adamw";
  }
  return "sgd_momentum";
}

OptimizerKind parse_optimizer(std::string_view name) {
  for (auto k : {OptimizerKind::sgd_momentum, OptimizerKind::adam, OptimizerKind::adamw}) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError("optimizer", "unknown optimizer '" + std::string(name) + "'");
}

Optimizer::Optimizer(OptimizerConfig config) : config_(std::move(config)) {}

void Optimizer::step(std::span<Tensor* const> params) {
  if (first_.empty()) {
    for (const Tensor* p : params) {
      first_.emplace_back(p->numel(), 0.0);
      if (config_.kind != OptimizerKind::sgd_momentum) second_.emplace_back(p->numel(), 0.0);
    }
  }
  if (first_.size() != params.size()) throw ContractError("optimizer: parameter list changed between steps");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i]->has_grad()) {
      throw ContractError("optimizer: parameter " + std::to_string(i) + " has no gradient; run backward first");
    }
    if (params[i]->numel() != first_[i].size()) {
      throw ContractError("optimizer: parameter " + std::to_string(i) + " changed size since the first step");
    }
  }

  ++step_count_;
  const double lr = config_.lr;
  const double wd = config_.weight_decay;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    auto& m = first_[i];
    switch (config_.kind) {
      case OptimizerKind::sgd_momentum:
        for (std::size_t j = 0; j < p.numel(); ++j) {
          const double g = p.grad[j] + wd * p.data[j];
          m[j] = config_.momentum * m[j] + g;
          p.data[j] -= lr * m[j];
        }
        break;
      case OptimizerKind::adam:
      case OptimizerKind::adamw: {
        auto& v = second_[i];
        const bool decoupled = config_.kind == OptimizerKind::adamw;
        const double t = static_cast<double>(step_count_);
        const double bc1 = 1.0 - std::pow(config_.beta1, t);
        const double bc2 = 1.0 - std::pow(config_.beta2, t);
        for (std::size_t j = 0; j < p.numel(); ++j) {
          double g = p.grad[j];
          if (decoupled) {
            p.data[j] -= lr * wd * p.data[j];
          } else {
            g += wd * p.data[j];
          }
          m[j] = config_.beta1 * m[j] + (1.0 - config_.beta1) * g;
          v[j] = config_.beta2 * v[j] + (1.0 - config_.beta2) * g * g;
          const double m_hat = m[j] / bc1;
          const double v_hat = v[j] / bc2;
          p.data[j] -= lr * m_hat / (std::sqrt(v_hat) + config_.eps);
        }
        break;
      }
    }
    p.clear_grad();
  }
}

std::string_view to_string(ScheduleKind kind) {
  switch (kind) {
    case ScheduleKind::constant:
      return "constant";
    case ScheduleKind::multistep:
      return "multistep";
    case ScheduleKind::step:
      return "step";
    case ScheduleKind::cosine:
      return "cosine";
    case ScheduleKind::linear_warmup_decay:
      return "linear_warmup_decay";
  }
  return "constant";
}

ScheduleKind parse_schedule(std::string_view name) {
  for (auto k : {ScheduleKind::constant, ScheduleKind::multistep, ScheduleKind::step, ScheduleKind::cosine,
                 ScheduleKind::linear_warmup_decay}) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError("schedule", "unknown schedule '" + std::string(name) + "'");
}

double lr_at(const LrSchedule& schedule, double base_lr, std::size_t t) {
  switch (schedule.kind) {
    case ScheduleKind::constant:
      return base_lr;
    case ScheduleKind::multistep: {
      const auto passed = std::count_if(schedule.milestones.begin(), schedule.milestones.end(),
                                        [t](std::size_t m) { return t >= m; });
      return base_lr * std::pow(schedule.gamma, static_cast<double>(passed));
    }
    case ScheduleKind::step: {
      if (schedule.step_size == 0) throw ContractError("lr_at: step_size must be positive");
      return base_lr * std::pow(schedule.gamma, static_cast<double>(t / schedule.step_size));
    }
    case ScheduleKind::cosine: {
      if (schedule.t_max == 0) throw ContractError("lr_at: t_max must be positive");
      const double progress = static_cast<double>(std::min(t, schedule.t_max)) / static_cast<double>(schedule.t_max);
      return base_lr * (1.0 + std::cos(std::numbers::pi * progress)) / 2.0;
    }
    case ScheduleKind::linear_warmup_decay: {
      const auto total = static_cast<double>(schedule.total_steps);
      const double warmup = std::round(schedule.warmup_fraction * total);
      const auto step = static_cast<double>(t);
      if (step < warmup) return base_lr * step / warmup;
      if (total <= warmup) return base_lr;
      return base_lr * std::max(0.0, (total - step) / (total - warmup));
    }
  }
  return base_lr;
}

}  // namespace etp
