#pragma once

// Experiment driver: train -> prune -> measure, and coefficient sweeps.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "etp/config.hpp"
#include "etp/dataset.hpp"
#include "etp/model.hpp"
#include "etp/pruner.hpp"

namespace etp {

// One row per epoch; losses are means over the epoch's mini-batches.
struct MetricsRecord {
  std::size_t epoch = 0;
  // Optimizer steps taken so far.
  std::size_t step = 0;
  double task_loss = 0.0;
  double penalty_value = 0.0;
  double total_loss = 0.0;
  // classification
  double train_accuracy = 0.0;
  // regression
  double train_mae = 0.0;
  double train_mse = 0.0;
  double lr = 0.0;
};

struct GroupNormEntry {
  std::size_t layer = 0;
  std::size_t group = 0;
  std::size_t index = 0;
  std::size_t distance = 0;
  double norm = 0.0;
};

struct NormSnapshot {
  std::size_t epoch = 0;
  std::vector<GroupNormEntry> groups;
};

using NormTrajectory = std::vector<NormSnapshot>;

struct TrainResult {
  ModelGraph model;
  std::vector<GroupIndexing> indexings;
  std::vector<MetricsRecord> metrics;
  // Snapshot at epoch 0 (initialization), then every log_norms_every epochs
  // and always at the final epoch.
  NormTrajectory norms;
};

// Input shape of the configured architecture (explicit or from the dataset).
ArchSpec resolved_arch(const TrainConfig& config);
ModelGraph build_model(const TrainConfig& config);

NormSnapshot snapshot_norms(const ModelGraph& model, std::span<const GroupIndexing> indexings, std::size_t epoch);

// Seeded mini-batch training of a fresh model. Throws NumericalError on a
// non-finite loss.
TrainResult train(const TrainConfig& config, const DatasetSplit& data);
// Continues training `model` with the given config and regularizer.
TrainResult train_model(ModelGraph model, const TrainConfig& config, const Dataset& train_set);

EvalResult evaluate(const ModelGraph& model, const Dataset& data);

struct SummaryRow {
  Scheme scheme = Scheme::none;
  double beta = 0.0;
  std::uint64_t seed = 0;
  double base_metric = 0.0;
  double pruned_metric = 0.0;
  double metric_drop = 0.0;
  double speedup = 1.0;
  std::size_t groups_removed = 0;
  std::size_t total_groups = 0;
  std::optional<double> finetuned_metric;
  std::optional<double> finetuned_drop;
  // "ok", or the failure message of a sweep entry.
  std::string status = "ok";
};

struct PipelineResult {
  SummaryRow summary;
  TrainResult base;
  TrainResult regularized;
  PrunePlan plan;
  ModelGraph pruned;
  MacsReport base_macs;
  MacsReport pruned_macs;
  EvalResult base_eval;
  EvalResult pruned_eval;
};

// Trains the unregularized base and the regularized model from identical
// initialization and batch order, prunes the regularized one per the config
// and measures both. `shared_base`, when given, replaces training the base.
PipelineResult run_pipeline(const TrainConfig& config, const DatasetSplit& data,
                            const TrainResult* shared_base = nullptr);

struct SweepResult {
  // Sorted by achieved speed-up (then beta); failed runs last.
  std::vector<SummaryRow> rows;
  TrainResult base;
  std::vector<PipelineResult> runs;
};

// run_pipeline once per coefficient, sharing seeds, data and the base model.
SweepResult sweep(const TrainConfig& config, std::span<const double> betas, const DatasetSplit& data);

// Spearman rank correlation with average ranks for ties; 0 when either
// side is constant.
double spearman_correlation(std::span<const double> x, std::span<const double> y);

}  // namespace etp
