#include "etp/io.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "etp/errors.hpp"

namespace etp {

namespace {

std::string provenance_line(const Provenance& prov) {
  char buf[200];
  std::snprintf(buf, sizeof buf, "# etp config_hash=%016" PRIx64 " seed=%" PRIu64 " dataset_seed=%" PRIu64
                " indexing_seed=%" PRIu64 "\n",
                prov.config_hash, prov.seed, prov.dataset_seed, prov.indexing_seed);
  return buf;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, v);
  return buf;
}

void write_tensor(std::ostream& out, const char* tag, const Tensor& t) {
  out << tag << ' ' << t.rank();
  for (auto d : t.shape) out << ' ' << d;
  out << '\n';
  for (std::size_t i = 0; i < t.numel(); ++i) out << (i ? " " : "") << format_double(t.data[i]);
  out << '\n';
}

std::string expect_token(std::istream& in, const char* what) {
  std::string token;
  if (!(in >> token)) throw ConstructionError(std::string("checkpoint truncated while reading ") + what);
  return token;
}

std::size_t read_size(std::istream& in, const char* what) {
  return parse_uint(what, expect_token(in, what));
}

Tensor read_tensor(std::istream& in, const char* tag) {
  if (expect_token(in, tag) != tag) throw ConstructionError(std::string("checkpoint: expected '") + tag + "'");
  const std::size_t rank = read_size(in, tag);
  if (rank == 0) return Tensor();
  Shape shape(rank);
  for (auto& d : shape) d = read_size(in, tag);
  std::vector<double> values(shape_numel(shape));
  for (auto& v : values) v = parse_double(tag, expect_token(in, tag));
  return Tensor(std::move(shape), std::move(values));
}

}  // namespace

Provenance provenance_of(const TrainConfig& config) {
  return {config_hash(config), config.seed, config.dataset_seed(), config.resolved_indexing_seed()};
}

void write_summary_csv(std::ostream& out, std::span<const SummaryRow> rows, const Provenance& prov, bool with_status) {
  bool finetuned = false;
  for (const auto& r : rows) finetuned = finetuned || r.finetuned_metric.has_value();
  out << provenance_line(prov);
  out << "scheme,beta,seed,base_metric,pruned_metric,metric_drop,speedup,groups_removed,total_groups";
  if (finetuned) out << ",finetuned_metric,finetuned_drop";
  if (with_status) out << ",status";
  out << '\n';
  for (const auto& r : rows) {
    out << to_string(r.scheme) << ',' << format_double(r.beta) << ',' << r.seed << ',' << format_double(r.base_metric)
        << ',' << format_double(r.pruned_metric) << ',' << format_double(r.metric_drop) << ','
        << format_double(r.speedup) << ',' << r.groups_removed << ',' << r.total_groups;
    if (finetuned) {
      out << ',' << (r.finetuned_metric ? format_double(*r.finetuned_metric) : "") << ','
          << (r.finetuned_drop ? format_double(*r.finetuned_drop) : "");
    }
    if (with_status) {
      std::string status = r.status;
      for (char& ch : status) {
        if (ch == ',' || ch == '\n') ch = ';';
      }
      out << ',' << status;
    }
    out << '\n';
  }
}

void write_metrics_csv(std::ostream& out, std::span<const MetricsRecord> records, const Provenance& prov) {
  out << provenance_line(prov);
  out << "epoch,step,task_loss,penalty_value,total_loss,train_accuracy,train_mae,train_mse,lr\n";
  for (const auto& r : records) {
    out << r.epoch << ',' << r.step << ',' << format_double(r.task_loss) << ',' << format_double(r.penalty_value) << ','
        << format_double(r.total_loss) << ',' << format_double(r.train_accuracy) << ',' << format_double(r.train_mae)
        << ',' << format_double(r.train_mse) << ',' << format_double(r.lr) << '\n';
  }
}

void write_trajectory_jsonl(std::ostream& out, const NormTrajectory& trajectory, const Provenance& prov) {
  nlohmann::ordered_json header;
  header["config_hash"] = hex64(prov.config_hash);
  header["seed"] = prov.seed;
  header["dataset_seed"] = prov.dataset_seed;
  header["indexing_seed"] = prov.indexing_seed;
  out << header.dump() << '\n';
  for (const auto& snap : trajectory) {
    nlohmann::ordered_json line;
    line["epoch"] = snap.epoch;
    auto groups = nlohmann::ordered_json::array();
    for (const auto& g : snap.groups) {
      nlohmann::ordered_json entry;
      entry["layer"] = g.layer;
      entry["group"] = g.group;
      entry["index"] = g.index;
      entry["distance"] = g.distance;
      entry["norm"] = g.norm;
      groups.push_back(std::move(entry));
    }
    line["groups"] = std::move(groups);
    out << line.dump() << '\n';
  }
}

void write_plan_csv(std::ostream& out, const ModelGraph& model, const PrunePlan& plan, const Provenance& prov) {
  out << provenance_line(prov);
  out << "# mode=" << to_string(plan.mode) << " threshold=" << format_double(plan.threshold_used)
      << " predicted_speedup=" << format_double(plan.predicted_speedup) << '\n';
  out << "layer,group,norm\n";
  for (const auto& r : plan.removals) {
    out << r.layer << ',' << r.group << ',' << format_double(group_l2_norm(model.layers[r.layer], r.group)) << '\n';
  }
}

void write_macs_csv(std::ostream& out, const ModelGraph& model, const MacsReport& report) {
  out << "layer,kind,groups,macs\n";
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    out << l << ',' << (model.layers[l].kind == LayerKind::dense ? "dense" : "conv") << ','
        << model.layers[l].group_count() << ',' << report.per_layer[l] << '\n';
  }
  out << "total,,," << report.total << '\n';
}

void save_checkpoint(std::ostream& out, const ModelGraph& model) {
  out << "etp-checkpoint 1\n";
  out << "input_shape " << model.input_shape.size();
  for (auto d : model.input_shape) out << ' ' << d;
  out << "\nlayers " << model.layers.size() << '\n';
  for (const auto& layer : model.layers) {
    out << "layer " << (layer.kind == LayerKind::dense ? "dense" : "conv") << ' '
        << (layer.activation == Activation::relu ? "relu" : "none") << " stride " << layer.stride << " padding "
        << layer.padding << " prunable " << (layer.prunable ? 1 : 0) << '\n';
    write_tensor(out, "weight", layer.weight);
    if (layer.has_bias()) {
      write_tensor(out, "bias", layer.bias);
    } else {
      out << "bias 0\n\n";
    }
  }
}

ModelGraph load_checkpoint(std::istream& in) {
  if (expect_token(in, "header") != "etp-checkpoint" || expect_token(in, "version") != "1") {
    throw ConstructionError("not an etp checkpoint (version 1)");
  }
  ModelGraph model;
  if (expect_token(in, "input_shape") != "input_shape") throw ConstructionError("checkpoint: expected input_shape");
  model.input_shape.resize(read_size(in, "input_shape"));
  for (auto& d : model.input_shape) d = read_size(in, "input_shape");
  if (expect_token(in, "layers") != "layers") throw ConstructionError("checkpoint: expected layers");
  const std::size_t count = read_size(in, "layers");
  for (std::size_t l = 0; l < count; ++l) {
    GroupedLayer layer;
    if (expect_token(in, "layer") != "layer") throw ConstructionError("checkpoint: expected layer");
    const auto kind = expect_token(in, "layer kind");
    if (kind != "dense" && kind != "conv") throw ConstructionError("checkpoint: unknown layer kind " + kind);
    layer.kind = kind == "dense" ? LayerKind::dense : LayerKind::conv2d;
    const auto act = expect_token(in, "activation");
    if (act != "relu" && act != "none") throw ConstructionError("checkpoint: unknown activation " + act);
    layer.activation = act == "relu" ? Activation::relu : Activation::none;
    expect_token(in, "stride");
    layer.stride = read_size(in, "stride");
    expect_token(in, "padding");
    layer.padding = read_size(in, "padding");
    expect_token(in, "prunable");
    layer.prunable = read_size(in, "prunable") != 0;
    layer.weight = read_tensor(in, "weight");
    layer.bias = read_tensor(in, "bias");
    layer.weight.requires_grad = true;
    layer.bias.requires_grad = layer.has_bias();
    model.layers.push_back(std::move(layer));
  }
  finalize_model(model);
  return model;
}

void save_checkpoint(const std::filesystem::path& path, const ModelGraph& model) {
  std::ostringstream out;
  save_checkpoint(out, model);
  write_file(path, out.str());
}

ModelGraph load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("checkpoint", "cannot open '" + path.string() + "'");
  return load_checkpoint(in);
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << content;
  if (!out) throw Error("failed writing '" + path.string() + "'");
}

}  // namespace etp
