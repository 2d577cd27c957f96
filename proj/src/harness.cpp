#include "etp/harness.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "etp/errors.hpp"
#include "etp/optimizer.hpp"
#include "etp/regularizer.hpp"
#include "etp/rng.hpp"

namespace etp {

namespace {

void check_output_matches(const ModelGraph& model, const Dataset& data) {
  const Shape out = model.output_shape();
  if (out.size() != 1) throw ConfigError("layers", "the last layer must be dense");
  if (data.task == TaskKind::classification) {
    if (out[0] != data.num_classes) {
      throw ConfigError("layers", "the last layer has " + std::to_string(out[0]) + " outputs but the dataset has " +
                                      std::to_string(data.num_classes) + " classes");
    }
  } else if (out[0] != data.targets.dim(1)) {
    throw ConfigError("layers", "the last layer has " + std::to_string(out[0]) + " outputs but the dataset has " +
                                    std::to_string(data.targets.dim(1)) + " targets");
  }
}

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

TrainConfig unregularized(TrainConfig config) {
  config.regularizer = RegularizerSpec{};
  return config;
}

std::size_t prunable_groups(const ModelGraph& model) {
  std::size_t total = 0;
  for (const auto& layer : model.layers) {
    if (layer.prunable) total += layer.group_count();
  }
  return total;
}

}  // namespace

ArchSpec resolved_arch(const TrainConfig& config) {
  ArchSpec arch = config.arch;
  if (arch.input_shape.empty()) arch.input_shape = dataset_feature_shape(config.dataset);
  return arch;
}

ModelGraph build_model(const TrainConfig& config) { return build_model(resolved_arch(config), config.seed); }

NormSnapshot snapshot_norms(const ModelGraph& model, std::span<const GroupIndexing> indexings, std::size_t epoch) {
  NormSnapshot snap;
  snap.epoch = epoch;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto norms = group_l2_norms(model.layers[l]);
    for (std::size_t i = 0; i < norms.size(); ++i) {
      snap.groups.push_back({l, i, indexings[l].assigned_indices[i], indexings[l].distance(i), norms[i]});
    }
  }
  return snap;
}

TrainResult train_model(ModelGraph model, const TrainConfig& config, const Dataset& train_set) {
  check_output_matches(model, train_set);
  const std::size_t n = train_set.size();
  if (n == 0) throw ConfigError("dataset_size", "training split is empty");

  TrainResult result;
  result.indexings = assign_model_indexing(model, config.indexing, config.resolved_indexing_seed());
  const RegularizerSpec& reg = config.regularizer;
  reg.validate();

  const std::size_t batch_size = std::min(config.batch_size, n);
  const std::size_t steps_per_epoch = (n + batch_size - 1) / batch_size;
  const std::size_t total_steps = steps_per_epoch * config.epochs;
  const bool per_step = config.schedule_unit == ScheduleUnit::step;
  LrSchedule schedule = config.schedule;
  schedule.t_max = config.t_max.value_or(per_step ? total_steps : config.epochs);
  schedule.total_steps = per_step ? total_steps : config.epochs;

  Optimizer optimizer(config.optimizer);
  const double base_lr = config.optimizer.lr;
  std::mt19937_64 shuffle_gen(derive_seed(config.seed, kStreamShuffle));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  result.norms.push_back(snapshot_norms(model, result.indexings, 0));
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_gen);
    double task_sum = 0.0, penalty_sum = 0.0, total_sum = 0.0;
    std::size_t correct = 0;
    double abs_err = 0.0, sq_err = 0.0;
    std::size_t target_count = 0;
    double lr = base_lr;

    for (std::size_t b = 0; b < steps_per_epoch; ++b) {
      const std::size_t begin = b * batch_size;
      const std::size_t end = std::min(begin + batch_size, n);
      const Dataset batch = train_set.subset(std::span<const std::size_t>(order.data() + begin, end - begin));
      lr = lr_at(schedule, base_lr, per_step ? step : epoch);
      optimizer.set_lr(lr);

      Tape tape;
      const auto params = bind_parameters(tape, model);
      const Var out = forward(model, params, tape.constant(batch.features));
      const Var task = train_set.task == TaskKind::classification
                           ? softmax_cross_entropy(out, batch.labels)
                           : mse_loss(out, tape.constant(batch.targets));
      Var total = task;
      double penalty_value = 0.0;
      if (reg.scheme != Scheme::none) {
        const Var pen = model_penalty(reg, model, params, result.indexings);
        penalty_value = pen.item();
        if (reg.reg_coefficient != 0.0) total = add(task, scale(pen, reg.reg_coefficient));
      }
      if (!std::isfinite(total.item())) {
        throw NumericalError("non-finite loss at epoch " + std::to_string(epoch + 1) + ", step " +
                             std::to_string(step + 1) + " (task " + format_double(task.item()) + ", penalty " +
                             format_double(penalty_value) + ")");
      }
      task_sum += task.item();
      penalty_sum += penalty_value;
      total_sum += total.item();

      const Tensor& o = out.value();
      if (train_set.task == TaskKind::classification) {
        const std::size_t width = o.dim(1);
        for (std::size_t i = 0; i < batch.size(); ++i) {
          const double* row = o.data.data() + i * width;
          if (static_cast<std::size_t>(std::max_element(row, row + width) - row) == batch.labels[i]) ++correct;
        }
      } else {
        for (std::size_t i = 0; i < o.numel(); ++i) {
          const double d = o.data[i] - batch.targets.data[i];
          abs_err += std::abs(d);
          sq_err += d * d;
        }
        target_count += o.numel();
      }

      tape.backward(total);
      optimizer.step(parameters(model));
      ++step;
    }

    MetricsRecord rec;
    rec.epoch = epoch + 1;
    rec.step = step;
    const auto batches = static_cast<double>(steps_per_epoch);
    rec.task_loss = task_sum / batches;
    rec.penalty_value = penalty_sum / batches;
    rec.total_loss = total_sum / batches;
    if (train_set.task == TaskKind::classification) {
      rec.train_accuracy = static_cast<double>(correct) / static_cast<double>(n);
    } else {
      rec.train_mae = abs_err / static_cast<double>(target_count);
      rec.train_mse = sq_err / static_cast<double>(target_count);
    }
    rec.lr = lr;
    result.metrics.push_back(rec);

    if ((epoch + 1) % config.log_norms_every == 0 || epoch + 1 == config.epochs) {
      result.norms.push_back(snapshot_norms(model, result.indexings, epoch + 1));
    }
  }
  result.model = std::move(model);
  return result;
}

TrainResult train(const TrainConfig& config, const DatasetSplit& data) {
  return train_model(build_model(config), config, data.train);
}

EvalResult evaluate(const ModelGraph& model, const Dataset& data) {
  return evaluate_predictions(predict(model, data.features), data);
}

PipelineResult run_pipeline(const TrainConfig& config, const DatasetSplit& data, const TrainResult* shared_base) {
  PipelineResult result;
  result.base = shared_base ? *shared_base : train(unregularized(config), data);
  result.regularized = train(config, data);

  const ModelGraph& trained = result.regularized.model;
  result.plan = config.prune_mode == PruneMode::threshold ? plan_by_threshold(trained, config.prune_threshold)
                                                          : plan_by_budget(trained, config.prune_target);
  result.pruned = apply_plan(trained, result.plan);

  result.base_eval = evaluate(result.base.model, data.test);
  result.pruned_eval = evaluate(result.pruned, data.test);
  result.base_macs = count_macs(result.base.model);
  result.pruned_macs = count_macs(result.pruned);

  SummaryRow& row = result.summary;
  row.scheme = config.regularizer.scheme;
  row.beta = config.regularizer.reg_coefficient;
  row.seed = config.seed;
  row.base_metric = result.base_eval.metric();
  row.pruned_metric = result.pruned_eval.metric();
  row.metric_drop = accuracy_drop(row.base_metric, row.pruned_metric);
  row.speedup = speedup(result.base_macs, result.pruned_macs);
  row.groups_removed = result.plan.removals.size();
  row.total_groups = prunable_groups(trained);

  if (config.finetune_epochs > 0) {
    TrainConfig ft = unregularized(config);
    ft.epochs = config.finetune_epochs;
    ft.schedule = LrSchedule{};
    ft.schedule_unit = ScheduleUnit::epoch;
    ft.t_max.reset();
    ft.optimizer.lr = config.finetune_lr.value_or(config.optimizer.lr / 10.0);
    const TrainResult tuned = train_model(result.pruned, ft, data.train);
    row.finetuned_metric = evaluate(tuned.model, data.test).metric();
    row.finetuned_drop = accuracy_drop(row.base_metric, *row.finetuned_metric);
  }
  return result;
}

SweepResult sweep(const TrainConfig& config, std::span<const double> betas, const DatasetSplit& data) {
  if (betas.empty()) throw ConfigError("sweep_betas", "the coefficient list is empty");
  SweepResult result;
  result.base = train(unregularized(config), data);
  for (double beta : betas) {
    TrainConfig run = config;
    run.regularizer.reg_coefficient = beta;
    try {
      result.runs.push_back(run_pipeline(run, data, &result.base));
      result.rows.push_back(result.runs.back().summary);
    } catch (const Error& e) {
      SummaryRow failed;
      failed.scheme = run.regularizer.scheme;
      failed.beta = beta;
      failed.seed = run.seed;
      failed.speedup = 0.0;
      failed.status = std::string("failed: ") + e.what();
      result.rows.push_back(failed);
    }
  }
  std::stable_sort(result.rows.begin(), result.rows.end(), [](const SummaryRow& a, const SummaryRow& b) {
    const bool a_ok = a.status == "ok", b_ok = b.status == "ok";
    if (a_ok != b_ok) return a_ok;
    if (a.speedup != b.speedup) return a.speedup < b.speedup;
    return a.beta < b.beta;
  });
  return result;
}

double spearman_correlation(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DimensionError("spearman_correlation: length mismatch");
  if (x.size() < 2) return 0.0;
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace etp
