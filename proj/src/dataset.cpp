#include "etp/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

#include "etp/errors.hpp"
#include "etp/rng.hpp"

namespace etp {

namespace {

struct RawData {
  TaskKind task = TaskKind::classification;
  std::size_t feature_dim = 0;
  std::vector<double> features;
  std::vector<std::size_t> labels;
  std::size_t num_classes = 0;
  std::vector<double> targets;
  std::size_t target_dim = 0;
};

RawData two_spirals(const DatasetSpec& spec, std::mt19937_64& gen) {
  RawData raw;
  raw.feature_dim = 2;
  raw.num_classes = 2;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> jitter(0.0, 1.0);
  for (std::size_t i = 0; i < spec.size; ++i) {
    const std::size_t label = i % 2;
    // 1.5 turns per arm; the second arm is the first rotated by pi.
    const double theta = std::sqrt(unit(gen)) * 3.0 * std::numbers::pi;
    const double phase = theta + static_cast<double>(label) * std::numbers::pi;
    raw.features.push_back(theta * std::cos(phase) + spec.noise * jitter(gen));
    raw.features.push_back(theta * std::sin(phase) + spec.noise * jitter(gen));
    raw.labels.push_back(label);
  }
  return raw;
}

RawData gaussian_blobs(const DatasetSpec& spec, std::mt19937_64& gen) {
  RawData raw;
  raw.feature_dim = 2;
  raw.num_classes = spec.classes;
  // Unit-variance blobs with centers on a circle of radius `separation`.
  const double k = static_cast<double>(spec.classes);
  const double radius = spec.separation;
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i < spec.size; ++i) {
    const std::size_t label = i % spec.classes;
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(label) / k;
    raw.features.push_back(radius * std::cos(angle) + normal(gen));
    raw.features.push_back(radius * std::sin(angle) + normal(gen));
    raw.labels.push_back(label);
  }
  return raw;
}

RawData checkerboard(const DatasetSpec& spec, std::mt19937_64& gen) {
  RawData raw;
  raw.feature_dim = 2;
  raw.num_classes = 2;
  std::uniform_real_distribution<double> coord(-2.0, 2.0);
  std::normal_distribution<double> jitter(0.0, 1.0);
  for (std::size_t i = 0; i < spec.size; ++i) {
    const double x = coord(gen);
    const double y = coord(gen);
    const auto cell = static_cast<long>(std::floor(x)) + static_cast<long>(std::floor(y)) + 4;
    raw.features.push_back(x + spec.noise * jitter(gen));
    raw.features.push_back(y + spec.noise * jitter(gen));
    raw.labels.push_back(static_cast<std::size_t>(cell % 2));
  }
  return raw;
}

RawData sine_regression(const DatasetSpec& spec, std::mt19937_64& gen) {
  RawData raw;
  raw.task = TaskKind::regression;
  raw.feature_dim = 1;
  raw.target_dim = 1;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t i = 0; i < spec.size; ++i) {
    const double x = unit(gen);
    raw.features.push_back(x);
    raw.targets.push_back(std::sin(2.0 * std::numbers::pi * x) + spec.noise * noise(gen));
  }
  return raw;
}

RawData load_csv(const DatasetSpec& spec) {
  std::ifstream in(spec.csv_path);
  if (!in) throw ConfigError("dataset_path", "cannot open '" + spec.csv_path + "'");
  RawData raw;
  raw.task = spec.csv_task;
  std::string line;
  std::size_t columns = 0;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    bool numeric = true;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(parse_double("dataset_path", cell));
      } catch (const ConfigError&) {
        numeric = false;
        break;
      }
    }
    if (!numeric) {
      if (first) {
        first = false;
        continue;  // header
      }
      throw ConfigError("dataset_path", "non-numeric row: " + line);
    }
    first = false;
    if (row.size() < 2) throw ConfigError("dataset_path", "rows need at least one feature and one target");
    if (columns == 0) columns = row.size();
    if (row.size() != columns) throw ConfigError("dataset_path", "ragged row: " + line);
    raw.features.insert(raw.features.end(), row.begin(), row.end() - 1);
    if (raw.task == TaskKind::classification) {
      const double label = row.back();
      if (label < 0.0 || label != std::floor(label)) throw ConfigError("dataset_path", "labels must be non-negative integers");
      raw.labels.push_back(static_cast<std::size_t>(label));
      raw.num_classes = std::max(raw.num_classes, raw.labels.back() + 1);
    } else {
      raw.targets.push_back(row.back());
    }
  }
  if (columns == 0) throw ConfigError("dataset_path", "no data rows in '" + spec.csv_path + "'");
  raw.feature_dim = columns - 1;
  raw.target_dim = 1;
  return raw;
}

RawData generate(const DatasetSpec& spec, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  if (spec.generator == "two_spirals") return two_spirals(spec, gen);
  if (spec.generator == "gaussian_blobs") return gaussian_blobs(spec, gen);
  if (spec.generator == "checkerboard_2d") return checkerboard(spec, gen);
  if (spec.generator == "sine_regression") return sine_regression(spec, gen);
  if (spec.generator == "csv") return load_csv(spec);
  throw ConfigError("dataset", "unknown generator '" + spec.generator + "'");
}

Dataset select_rows(const RawData& raw, std::span<const std::size_t> rows) {
  Dataset out;
  out.task = raw.task;
  out.num_classes = raw.num_classes;
  std::vector<double> features;
  features.reserve(rows.size() * raw.feature_dim);
  for (std::size_t r : rows) {
    features.insert(features.end(), raw.features.begin() + r * raw.feature_dim,
                    raw.features.begin() + (r + 1) * raw.feature_dim);
  }
  out.features = Tensor({rows.size(), raw.feature_dim}, std::move(features));
  if (raw.task == TaskKind::classification) {
    for (std::size_t r : rows) out.labels.push_back(raw.labels[r]);
  } else {
    std::vector<double> targets;
    for (std::size_t r : rows) {
      targets.insert(targets.end(), raw.targets.begin() + r * raw.target_dim,
                     raw.targets.begin() + (r + 1) * raw.target_dim);
    }
    out.targets = Tensor({rows.size(), raw.target_dim}, std::move(targets));
  }
  return out;
}

}  // namespace

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  Dataset out;
  out.task = task;
  out.num_classes = num_classes;
  const std::size_t width = features.numel() / size();
  Shape shape = features.shape;
  shape[0] = rows.size();
  std::vector<double> values;
  values.reserve(rows.size() * width);
  for (std::size_t r : rows) {
    values.insert(values.end(), features.data.begin() + r * width, features.data.begin() + (r + 1) * width);
  }
  out.features = Tensor(shape, std::move(values));
  if (task == TaskKind::classification) {
    for (std::size_t r : rows) out.labels.push_back(labels[r]);
  } else {
    const std::size_t tw = targets.numel() / size();
    std::vector<double> t;
    for (std::size_t r : rows) t.insert(t.end(), targets.data.begin() + r * tw, targets.data.begin() + (r + 1) * tw);
    out.targets = Tensor({rows.size(), tw}, std::move(t));
  }
  return out;
}

Shape dataset_feature_shape(const DatasetSpec& spec) {
  if (spec.generator == "sine_regression") return {1};
  if (spec.generator == "csv") return {load_csv(spec).feature_dim};
  return {2};
}

DatasetSplit gen_dataset(const DatasetSpec& spec, std::uint64_t seed) {
  if (!(spec.test_fraction > 0.0 && spec.test_fraction < 1.0)) {
    throw ConfigError("test_fraction", "must lie in (0, 1)");
  }
  const RawData raw = generate(spec, seed);
  const std::size_t n = raw.task == TaskKind::classification ? raw.labels.size() : raw.targets.size() / raw.target_dim;
  if (n < 2) throw ConfigError("dataset_size", "need at least two samples to split");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 split_gen(derive_seed(seed, kStreamDataset));
  std::shuffle(order.begin(), order.end(), split_gen);
  auto n_test = static_cast<std::size_t>(std::llround(spec.test_fraction * static_cast<double>(n)));
  n_test = std::clamp<std::size_t>(n_test, 1, n - 1);
  const std::span<const std::size_t> test_rows(order.data(), n_test);
  const std::span<const std::size_t> train_rows(order.data() + n_test, n - n_test);

  DatasetSplit split{select_rows(raw, train_rows), select_rows(raw, test_rows)};

  const std::size_t dim = raw.feature_dim;
  const std::size_t n_train = split.train.size();
  for (std::size_t j = 0; j < dim; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n_train; ++i) mean += split.train.features.data[i * dim + j];
    mean /= static_cast<double>(n_train);
    double var = 0.0;
    for (std::size_t i = 0; i < n_train; ++i) {
      const double d = split.train.features.data[i * dim + j] - mean;
      var += d * d;
    }
    double sd = std::sqrt(var / static_cast<double>(n_train));
    if (!(sd > 0.0)) sd = 1.0;
    for (Dataset* part : {&split.train, &split.test}) {
      for (std::size_t i = 0; i < part->size(); ++i) {
        double& v = part->features.data[i * dim + j];
        v = (v - mean) / sd;
      }
    }
  }
  return split;
}

EvalResult evaluate_predictions(const Tensor& outputs, const Dataset& data) {
  EvalResult result;
  result.task = data.task;
  const std::size_t n = data.size();
  if (outputs.rank() != 2 || outputs.dim(0) != n) {
    throw DimensionError("evaluate: outputs " + shape_str(outputs.shape) + " do not match " + std::to_string(n) +
                         " samples");
  }
  const std::size_t width = outputs.dim(1);
  if (data.task == TaskKind::classification) {
    std::size_t correct = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double* row = outputs.data.data() + i * width;
      const auto predicted = static_cast<std::size_t>(std::max_element(row, row + width) - row);
      if (predicted == data.labels[i]) ++correct;
    }
    result.accuracy = static_cast<double>(correct) / static_cast<double>(n);
  } else {
    if (outputs.shape != data.targets.shape) {
      throw DimensionError("evaluate: outputs " + shape_str(outputs.shape) + " vs targets " +
                           shape_str(data.targets.shape));
    }
    double abs_sum = 0.0, sq_sum = 0.0;
    for (std::size_t i = 0; i < outputs.numel(); ++i) {
      const double d = outputs.data[i] - data.targets.data[i];
      abs_sum += std::abs(d);
      sq_sum += d * d;
    }
    result.mae = abs_sum / static_cast<double>(outputs.numel());
    result.mse = sq_sum / static_cast<double>(outputs.numel());
  }
  return result;
}

}  // namespace etp
