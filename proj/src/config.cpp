#include "etp/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "etp/errors.hpp"

namespace etp {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    parts.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

bool parse_bool(std::string_view key, std::string_view text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigError(std::string(key), "expected a boolean, got '" + std::string(text) + "'");
}

Shape parse_shape(std::string_view key, std::string_view text) {
  Shape shape;
  if (trim(text) == "auto") return shape;
  for (auto part : split(text, 'x')) {
    const auto d = parse_uint(key, part);
    if (d == 0) throw ConfigError(std::string(key), "dimensions must be positive");
    shape.push_back(d);
  }
  if (shape.size() != 1 && shape.size() != 3) {
    throw ConfigError(std::string(key), "expected <features> or <C>x<H>x<W>");
  }
  return shape;
}

std::string format_shape(const Shape& shape) {
  std::string out;
  for (std::size_t i = 0; i < shape.size(); ++i) out += (i ? "x" : "") + std::to_string(shape[i]);
  return out;
}

template <typename T>
std::string format_optional(const std::optional<T>& value, const char* unset) {
  if (!value) return unset;
  if constexpr (std::is_floating_point_v<T>) {
    return format_double(*value);
  } else {
    return std::to_string(*value);
  }
}

std::string format_list(const std::vector<double>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) out += (i ? "," : "") + format_double(values[i]);
  return out;
}

struct Entry {
  const char* key;
  std::function<void(TrainConfig&, std::string_view)> set;
  std::function<std::string(const TrainConfig&)> get;
};

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = {
      {"layers", [](TrainConfig& c, std::string_view v) { c.arch.layers = parse_layers(v); },
       [](const TrainConfig& c) { return format_layers(c.arch.layers); }},
      {"input_shape", [](TrainConfig& c, std::string_view v) { c.arch.input_shape = parse_shape("input_shape", v); },
       [](const TrainConfig& c) { return c.arch.input_shape.empty() ? std::string("auto") : format_shape(c.arch.input_shape); }},
      {"prune_output_layer", [](TrainConfig& c, std::string_view v) { c.arch.prune_output_layer = parse_bool("prune_output_layer", v); },
       [](const TrainConfig& c) { return std::string(c.arch.prune_output_layer ? "true" : "false"); }},
      {"dataset", [](TrainConfig& c, std::string_view v) { c.dataset.generator = std::string(v); },
       [](const TrainConfig& c) { return c.dataset.generator; }},
      {"dataset_size", [](TrainConfig& c, std::string_view v) { c.dataset.size = parse_uint("dataset_size", v); },
       [](const TrainConfig& c) { return std::to_string(c.dataset.size); }},
      {"dataset_noise", [](TrainConfig& c, std::string_view v) { c.dataset.noise = parse_double("dataset_noise", v); },
       [](const TrainConfig& c) { return format_double(c.dataset.noise); }},
      {"dataset_classes", [](TrainConfig& c, std::string_view v) { c.dataset.classes = parse_uint("dataset_classes", v); },
       [](const TrainConfig& c) { return std::to_string(c.dataset.classes); }},
      {"dataset_separation", [](TrainConfig& c, std::string_view v) { c.dataset.separation = parse_double("dataset_separation", v); },
       [](const TrainConfig& c) { return format_double(c.dataset.separation); }},
      {"dataset_seed", [](TrainConfig& c, std::string_view v) { c.dataset.seed = parse_uint("dataset_seed", v); },
       [](const TrainConfig& c) { return std::to_string(c.dataset_seed()); }},
      {"dataset_path", [](TrainConfig& c, std::string_view v) { c.dataset.csv_path = std::string(v); },
       [](const TrainConfig& c) { return c.dataset.csv_path; }},
      {"task",
       [](TrainConfig& c, std::string_view v) {
         if (v == "classification") {
           c.dataset.csv_task = TaskKind::classification;
         } else if (v == "regression") {
           c.dataset.csv_task = TaskKind::regression;
         } else {
           throw ConfigError("task", "expected classification or regression");
         }
       },
       [](const TrainConfig& c) { return std::string(to_string(c.dataset.csv_task)); }},
      {"test_fraction", [](TrainConfig& c, std::string_view v) { c.dataset.test_fraction = parse_double("test_fraction", v); },
       [](const TrainConfig& c) { return format_double(c.dataset.test_fraction); }},
      {"epochs", [](TrainConfig& c, std::string_view v) { c.epochs = parse_uint("epochs", v); },
       [](const TrainConfig& c) { return std::to_string(c.epochs); }},
      {"batch_size", [](TrainConfig& c, std::string_view v) { c.batch_size = parse_uint("batch_size", v); },
       [](const TrainConfig& c) { return std::to_string(c.batch_size); }},
      {"optimizer", [](TrainConfig& c, std::string_view v) { c.optimizer.kind = parse_optimizer(v); },
       [](const TrainConfig& c) { return std::string(to_string(c.optimizer.kind)); }},
      {"lr", [](TrainConfig& c, std::string_view v) { c.optimizer.lr = parse_double("lr", v); },
       [](const TrainConfig& c) { return format_double(c.optimizer.lr); }},
      {"momentum", [](TrainConfig& c, std::string_view v) { c.optimizer.momentum = parse_double("momentum", v); },
       [](const TrainConfig& c) { return format_double(c.optimizer.momentum); }},
      {"adam_beta1", [](TrainConfig& c, std::string_view v) { c.optimizer.beta1 = parse_double("adam_beta1", v); },
       [](const TrainConfig& c) { return format_double(c.optimizer.beta1); }},
      {"adam_beta2", [](TrainConfig& c, std::string_view v) { c.optimizer.beta2 = parse_double("adam_beta2", v); },
       [](const TrainConfig& c) { return format_double(c.optimizer.beta2); }},
      {"adam_eps", [](TrainConfig& c, std::string_view v) { c.optimizer.eps = parse_double("adam_eps", v); },
       [](const TrainConfig& c) { return format_double(c.optimizer.eps); }},
      {"weight_decay", [](TrainConfig& c, std::string_view v) { c.optimizer.weight_decay = parse_double("weight_decay", v); },
       [](const TrainConfig& c) { return format_double(c.optimizer.weight_decay); }},
      {"schedule", [](TrainConfig& c, std::string_view v) { c.schedule.kind = parse_schedule(v); },
       [](const TrainConfig& c) { return std::string(to_string(c.schedule.kind)); }},
      {"schedule_unit",
       [](TrainConfig& c, std::string_view v) {
         if (v == "epoch") {
           c.schedule_unit = ScheduleUnit::epoch;
         } else if (v == "step") {
           c.schedule_unit = ScheduleUnit::step;
         } else {
           throw ConfigError("schedule_unit", "expected epoch or step");
         }
       },
       [](const TrainConfig& c) { return std::string(c.schedule_unit == ScheduleUnit::epoch ? "epoch" : "step"); }},
      {"milestones",
       [](TrainConfig& c, std::string_view v) {
         c.schedule.milestones.clear();
         if (trim(v).empty()) return;
         for (auto part : split(v, ',')) c.schedule.milestones.push_back(parse_uint("milestones", part));
       },
       [](const TrainConfig& c) {
         std::string out;
         for (std::size_t i = 0; i < c.schedule.milestones.size(); ++i)
           out += (i ? "," : "") + std::to_string(c.schedule.milestones[i]);
         return out;
       }},
      {"gamma", [](TrainConfig& c, std::string_view v) { c.schedule.gamma = parse_double("gamma", v); },
       [](const TrainConfig& c) { return format_double(c.schedule.gamma); }},
      {"step_size", [](TrainConfig& c, std::string_view v) { c.schedule.step_size = parse_uint("step_size", v); },
       [](const TrainConfig& c) { return std::to_string(c.schedule.step_size); }},
      {"t_max", [](TrainConfig& c, std::string_view v) { if (v == "auto") c.t_max.reset(); else c.t_max = parse_uint("t_max", v); },
       [](const TrainConfig& c) { return format_optional(c.t_max, "auto"); }},
      {"warmup_fraction", [](TrainConfig& c, std::string_view v) { c.schedule.warmup_fraction = parse_double("warmup_fraction", v); },
       [](const TrainConfig& c) { return format_double(c.schedule.warmup_fraction); }},
      {"scheme", [](TrainConfig& c, std::string_view v) { c.regularizer.scheme = parse_scheme(v); },
       [](const TrainConfig& c) { return std::string(to_string(c.regularizer.scheme)); }},
      {"beta", [](TrainConfig& c, std::string_view v) { c.regularizer.reg_coefficient = parse_double("beta", v); },
       [](const TrainConfig& c) { return format_double(c.regularizer.reg_coefficient); }},
      {"exp_base",
       [](TrainConfig& c, std::string_view v) {
         if (v == "auto") {
           c.regularizer.exp_base.reset();
         } else {
           c.regularizer.exp_base = parse_double("exp_base", v);
         }
       },
       [](const TrainConfig& c) { return format_optional(c.regularizer.exp_base, "auto"); }},
      {"heaviside_threshold",
       [](TrainConfig& c, std::string_view v) { if (v == "unset") c.regularizer.heaviside_threshold.reset(); else c.regularizer.heaviside_threshold = parse_double("heaviside_threshold", v); },
       [](const TrainConfig& c) { return format_optional(c.regularizer.heaviside_threshold, "unset"); }},
      {"heaviside_force",
       [](TrainConfig& c, std::string_view v) { if (v == "unset") c.regularizer.heaviside_force.reset(); else c.regularizer.heaviside_force = parse_double("heaviside_force", v); },
       [](const TrainConfig& c) { return format_optional(c.regularizer.heaviside_force, "unset"); }},
      {"indexing",
       [](TrainConfig& c, std::string_view v) {
         if (v == "natural") {
           c.indexing = IndexingStrategy::natural;
         } else if (v == "random") {
           c.indexing = IndexingStrategy::random;
         } else {
           throw ConfigError("indexing", "expected natural or random");
         }
       },
       [](const TrainConfig& c) { return std::string(c.indexing == IndexingStrategy::natural ? "natural" : "random"); }},
      {"indexing_seed", [](TrainConfig& c, std::string_view v) { c.indexing_seed = parse_uint("indexing_seed", v); },
       [](const TrainConfig& c) { return std::to_string(c.resolved_indexing_seed()); }},
      {"prune_mode",
       [](TrainConfig& c, std::string_view v) {
         if (v == "threshold") {
           c.prune_mode = PruneMode::threshold;
         } else if (v == "budget") {
           c.prune_mode = PruneMode::budget;
         } else {
           throw ConfigError("prune_mode", "expected threshold or budget");
         }
       },
       [](const TrainConfig& c) { return std::string(to_string(c.prune_mode)); }},
      {"prune_threshold", [](TrainConfig& c, std::string_view v) { c.prune_threshold = parse_double("prune_threshold", v); },
       [](const TrainConfig& c) { return format_double(c.prune_threshold); }},
      {"prune_target", [](TrainConfig& c, std::string_view v) { c.prune_target = parse_double("prune_target", v); },
       [](const TrainConfig& c) { return format_double(c.prune_target); }},
      {"finetune_epochs", [](TrainConfig& c, std::string_view v) { c.finetune_epochs = parse_uint("finetune_epochs", v); },
       [](const TrainConfig& c) { return std::to_string(c.finetune_epochs); }},
      {"finetune_lr", [](TrainConfig& c, std::string_view v) { if (v == "auto") c.finetune_lr.reset(); else c.finetune_lr = parse_double("finetune_lr", v); },
       [](const TrainConfig& c) { return format_optional(c.finetune_lr, "auto"); }},
      {"seed", [](TrainConfig& c, std::string_view v) { c.seed = parse_uint("seed", v); },
       [](const TrainConfig& c) { return std::to_string(c.seed); }},
      {"out_dir", [](TrainConfig& c, std::string_view v) { c.out_dir = std::string(v); },
       [](const TrainConfig& c) { return c.out_dir; }},
      {"log_norms_every", [](TrainConfig& c, std::string_view v) { c.log_norms_every = parse_uint("log_norms_every", v); },
       [](const TrainConfig& c) { return std::to_string(c.log_norms_every); }},
      {"sweep_betas", [](TrainConfig& c, std::string_view v) { c.sweep_betas = parse_double_list("sweep_betas", v); },
       [](const TrainConfig& c) { return format_list(c.sweep_betas); }},
  };
  return table;
}

const std::set<std::string, std::less<>> kRequiredKeys = {"layers", "dataset"};

const std::set<std::string, std::less<>> kGenerators = {"two_spirals", "gaussian_blobs", "checkerboard_2d",
                                                        "sine_regression", "csv"};

}  // namespace

std::string_view to_string(TaskKind task) {
  return task == TaskKind::classification ? "classification" : "regression";
}

std::string format_double(double value) {
  char buf[64];
  const auto result = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, result.ptr);
}

double parse_double(std::string_view key, std::string_view text) {
  text = trim(text);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  double value = 0.0;
  const auto result = std::from_chars(text.data(), text.data() + text.size(), value);
  if (text.empty() || result.ec != std::errc() || result.ptr != text.data() + text.size() || !std::isfinite(value)) {
    throw ConfigError(std::string(key), "expected a number, got '" + std::string(text) + "'");
  }
  return value;
}

std::uint64_t parse_uint(std::string_view key, std::string_view text) {
  text = trim(text);
  std::uint64_t value = 0;
  const auto result = std::from_chars(text.data(), text.data() + text.size(), value);
  if (text.empty() || result.ec != std::errc() || result.ptr != text.data() + text.size()) {
    throw ConfigError(std::string(key), "expected a non-negative integer, got '" + std::string(text) + "'");
  }
  return value;
}

std::vector<double> parse_double_list(std::string_view key, std::string_view text) {
  std::vector<double> out;
  if (trim(text).empty()) return out;
  for (auto part : split(text, ',')) out.push_back(parse_double(key, part));
  return out;
}

std::vector<LayerSpec> parse_layers(std::string_view text) {
  std::vector<LayerSpec> layers;
  for (auto item : split(text, ',')) {
    const auto tokens = split(item, ':');
    if (tokens.size() < 2) throw ConfigError("layers", "layer '" + std::string(item) + "' needs kind:out");
    LayerSpec spec;
    if (tokens[0] == "dense") {
      spec.kind = LayerKind::dense;
    } else if (tokens[0] == "conv") {
      spec.kind = LayerKind::conv2d;
    } else {
      throw ConfigError("layers", "unknown layer kind '" + std::string(tokens[0]) + "'");
    }
    spec.out = parse_uint("layers", tokens[1]);
    if (spec.out == 0) throw ConfigError("layers", "layer outputs must be positive");
    for (std::size_t i = 2; i < tokens.size(); ++i) {
      const auto opt = tokens[i];
      if (opt == "relu") {
        spec.activation = Activation::relu;
      } else if (opt == "none") {
        spec.activation = Activation::none;
      } else if (opt == "nobias") {
        spec.bias = false;
      } else if (opt.starts_with("in=")) {
        spec.in = parse_uint("layers", opt.substr(3));
      } else if (opt.size() > 1 && (opt[0] == 'k' || opt[0] == 's' || opt[0] == 'p')) {
        const auto value = parse_uint("layers", opt.substr(1));
        if (opt[0] == 'k') spec.kernel = value;
        if (opt[0] == 's') spec.stride = value;
        if (opt[0] == 'p') spec.padding = value;
      } else {
        throw ConfigError("layers", "unknown layer option '" + std::string(opt) + "'");
      }
    }
    layers.push_back(spec);
  }
  return layers;
}

std::string format_layers(const std::vector<LayerSpec>& layers) {
  std::string out;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    if (i) out += ", ";
    out += l.kind == LayerKind::dense ? "dense:" : "conv:";
    out += std::to_string(l.out);
    if (l.kind == LayerKind::conv2d) {
      out += ":k" + std::to_string(l.kernel) + ":s" + std::to_string(l.stride) + ":p" + std::to_string(l.padding);
    }
    if (l.in != 0) out += ":in=" + std::to_string(l.in);
    if (l.activation == Activation::relu) out += ":relu";
    if (!l.bias) out += ":nobias";
  }
  return out;
}

void validate_config(const TrainConfig& c) {
  if (c.arch.layers.empty()) throw ConfigError("layers", "at least one layer is required");
  if (!kGenerators.contains(c.dataset.generator)) {
    throw ConfigError("dataset", "unknown generator '" + c.dataset.generator + "'");
  }
  if (c.dataset.generator == "csv" && c.dataset.csv_path.empty()) {
    throw ConfigError("dataset_path", "required when dataset = csv");
  }
  if (c.dataset.size < 4) throw ConfigError("dataset_size", "must be at least 4");
  if (c.dataset.noise < 0.0) throw ConfigError("dataset_noise", "must be non-negative");
  if (c.dataset.classes < 2) throw ConfigError("dataset_classes", "must be at least 2");
  if (!(c.dataset.test_fraction > 0.0 && c.dataset.test_fraction < 1.0)) {
    throw ConfigError("test_fraction", "must lie in (0, 1)");
  }
  if (c.epochs < 1) throw ConfigError("epochs", "must be at least 1");
  if (c.batch_size < 1) throw ConfigError("batch_size", "must be at least 1");
  if (!(c.optimizer.lr >= 0.0)) throw ConfigError("lr", "must be non-negative");
  if (c.optimizer.weight_decay < 0.0) throw ConfigError("weight_decay", "must be non-negative");
  if (c.schedule.kind == ScheduleKind::step && c.schedule.step_size == 0) {
    throw ConfigError("step_size", "must be positive");
  }
  if (c.t_max && *c.t_max == 0) throw ConfigError("t_max", "must be positive");
  if (c.regularizer.reg_coefficient < 0.0) throw ConfigError("beta", "must be non-negative");
  if (c.regularizer.exp_base && !(*c.regularizer.exp_base > 1.0)) throw ConfigError("exp_base", "must be greater than 1");
  if (c.regularizer.scheme == Scheme::heaviside) {
    if (!c.regularizer.heaviside_threshold) throw ConfigError("heaviside_threshold", "required for scheme heaviside");
    if (!c.regularizer.heaviside_force) throw ConfigError("heaviside_force", "required for scheme heaviside");
  }
  if (c.prune_threshold < 0.0) throw ConfigError("prune_threshold", "must be non-negative");
  if (c.prune_target < 1.0) throw ConfigError("prune_target", "must be at least 1");
  if (c.log_norms_every < 1) throw ConfigError("log_norms_every", "must be at least 1");
  for (double b : c.sweep_betas) {
    if (b < 0.0) throw ConfigError("sweep_betas", "coefficients must be non-negative");
  }
  try {
    c.regularizer.validate();
  } catch (const ContractError& e) {
    throw ConfigError("scheme", e.what());
  }
}

TrainConfig parse_config(std::string_view text) {
  std::map<std::string, const Entry*, std::less<>> by_key;
  for (const auto& e : entries()) by_key.emplace(e.key, &e);

  TrainConfig config;
  std::set<std::string, std::less<>> seen;
  std::size_t line_no = 0;
  for (auto raw : split(text, '\n')) {
    ++line_no;
    auto line = raw.substr(0, raw.find('#'));
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value', got '" + std::string(line) + "'");
    }
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    const auto it = by_key.find(key);
    if (it == by_key.end()) throw ConfigError(std::string(key), "unknown key");
    if (!seen.insert(std::string(key)).second) throw ConfigError(std::string(key), "given more than once");
    it->second->set(config, value);
  }
  for (const auto& key : kRequiredKeys) {
    if (!seen.contains(key)) throw ConfigError(key, "missing required key");
  }
  // Warmup schedules are naturally indexed by step.
  if (!seen.contains("schedule_unit") && config.schedule.kind == ScheduleKind::linear_warmup_decay) {
    config.schedule_unit = ScheduleUnit::step;
  }
  validate_config(config);
  return config;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str());
}

std::string config_echo(const TrainConfig& config) {
  std::string out;
  for (const auto& e : entries()) out += std::string(e.key) + " = " + e.get(config) + "\n";
  return out;
}

std::uint64_t config_hash(const TrainConfig& config) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (const auto& e : entries()) {
    // Where results land does not change them.
    if (std::string_view(e.key) == "out_dir") continue;
    for (unsigned char ch : std::string(e.key) + " = " + e.get(config) + "\n") {
      hash ^= ch;
      hash *= 0x100000001b3ULL;
    }
  }
  return hash;
}

}  // namespace etp
