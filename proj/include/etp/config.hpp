#pragma once

// Flat `key = value` experiment configuration. `#` starts a comment; every
// key may appear at most once and unknown keys are rejected. The full key
// set is documented in README.md.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "etp/model.hpp"
#include "etp/optimizer.hpp"
#include "etp/pruner.hpp"
#include "etp/regularizer.hpp"

namespace etp {

enum class TaskKind { classification, regression };

std::string_view to_string(TaskKind task);

struct DatasetSpec {
  // two_spirals, gaussian_blobs, checkerboard_2d, sine_regression or csv.
  std::string generator;
  std::size_t size = 1000;
  double noise = 0.1;
  std::size_t classes = 4;
  double separation = 5.0;
  double test_fraction = 0.2;
  std::optional<std::uint64_t> seed;
  std::string csv_path;
  // Only consulted for csv; generators imply their task.
  TaskKind csv_task = TaskKind::classification;
};

enum class ScheduleUnit { epoch, step };

struct TrainConfig {
  ArchSpec arch;
  DatasetSpec dataset;
  std::size_t epochs = 100;
  std::size_t batch_size = 32;
  OptimizerConfig optimizer;
  LrSchedule schedule;
  ScheduleUnit schedule_unit = ScheduleUnit::epoch;
  // Unset means "derive from the run length".
  std::optional<std::size_t> t_max;
  RegularizerSpec regularizer;
  IndexingStrategy indexing = IndexingStrategy::natural;
  std::optional<std::uint64_t> indexing_seed;
  PruneMode prune_mode = PruneMode::threshold;
  double prune_threshold = 1e-3;
  double prune_target = 2.0;
  std::size_t finetune_epochs = 0;
  std::optional<double> finetune_lr;
  std::uint64_t seed = 0;
  std::string out_dir = "etp_out";
  std::size_t log_norms_every = 1;
  std::vector<double> sweep_betas;

  std::uint64_t dataset_seed() const { return dataset.seed.value_or(seed); }
  std::uint64_t resolved_indexing_seed() const { return indexing_seed.value_or(seed); }
};

// Throws ConfigError naming the offending key.
TrainConfig parse_config(std::string_view text);
TrainConfig load_config(const std::filesystem::path& path);

// Re-checks invariants after programmatic edits (e.g. CLI overrides).
void validate_config(const TrainConfig& config);

// Canonical `key = value` listing of every setting, defaults included.
std::string config_echo(const TrainConfig& config);
// FNV-1a 64 of config_echo() without the out_dir line.
std::uint64_t config_hash(const TrainConfig& config);

// Layer list syntax: comma separated `kind:out[:option...]` with options
// relu, none, k<N>, s<N>, p<N>, in=<N>, nobias. Example: "dense:64:relu, dense:2".
std::vector<LayerSpec> parse_layers(std::string_view text);
std::string format_layers(const std::vector<LayerSpec>& layers);

// Shortest decimal text that parses back to the same double.
std::string format_double(double value);
// Strict number parsing; throws ConfigError for `key` on failure.
double parse_double(std::string_view key, std::string_view text);
std::uint64_t parse_uint(std::string_view key, std::string_view text);
// Comma separated doubles.
std::vector<double> parse_double_list(std::string_view key, std::string_view text);

}  // namespace etp
