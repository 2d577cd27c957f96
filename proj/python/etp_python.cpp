// Python bindings: configs in, plain dicts and lists out.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <optional>
#include <string>
#include <vector>

#include "etp/config.hpp"
#include "etp/dataset.hpp"
#include "etp/errors.hpp"
#include "etp/harness.hpp"
#include "etp/io.hpp"
#include "etp/pruner.hpp"
#include "etp/regularizer.hpp"

namespace py = pybind11;

namespace {

py::dict summary_dict(const etp::SummaryRow& row) {
  py::dict d;
  d["scheme"] = std::string(etp::to_string(row.scheme));
  d["beta"] = row.beta;
  d["seed"] = row.seed;
  d["base_metric"] = row.base_metric;
  d["pruned_metric"] = row.pruned_metric;
  d["metric_drop"] = row.metric_drop;
  d["speedup"] = row.speedup;
  d["groups_removed"] = row.groups_removed;
  d["total_groups"] = row.total_groups;
  if (row.finetuned_metric) d["finetuned_metric"] = *row.finetuned_metric;
  if (row.finetuned_drop) d["finetuned_drop"] = *row.finetuned_drop;
  d["status"] = row.status;
  return d;
}

py::list removals_list(const etp::PrunePlan& plan) {
  py::list out;
  for (const auto& r : plan.removals) out.append(py::make_tuple(r.layer, r.group));
  return out;
}

py::dict plan_dict(const etp::PrunePlan& plan) {
  py::dict d;
  d["mode"] = std::string(etp::to_string(plan.mode));
  d["removals"] = removals_list(plan);
  d["threshold"] = plan.threshold_used;
  d["predicted_speedup"] = plan.predicted_speedup;
  d["predicted_macs"] = plan.predicted_macs;
  return d;
}

etp::PrunePlan plan_from(const etp::ModelGraph& model, const std::vector<std::pair<std::size_t, std::size_t>>& refs) {
  etp::PrunePlan plan;
  for (const auto& [l, g] : refs) plan.removals.push_back({l, g});
  std::sort(plan.removals.begin(), plan.removals.end());
  const auto macs = etp::count_macs_after(model, plan.removals);
  plan.predicted_macs = macs.total;
  return plan;
}

py::list metrics_list(const std::vector<etp::MetricsRecord>& records) {
  py::list out;
  for (const auto& r : records) {
    py::dict d;
    d["epoch"] = r.epoch;
    d["step"] = r.step;
    d["task_loss"] = r.task_loss;
    d["penalty_value"] = r.penalty_value;
    d["total_loss"] = r.total_loss;
    d["train_accuracy"] = r.train_accuracy;
    d["train_mse"] = r.train_mse;
    d["lr"] = r.lr;
    out.append(d);
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_etp, m) {
  m.doc() = "Distance-weighted group regularization and structured pruning";

  auto base_error = py::register_exception<etp::Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<etp::ConfigError>(m, "ConfigError", base_error.ptr());
  py::register_exception<etp::NumericalError>(m, "NumericalError", base_error.ptr());
  py::register_exception<etp::UnreachableTarget>(m, "UnreachableTarget", base_error.ptr());
  py::register_exception<etp::ContractError>(m, "ContractError", base_error.ptr());
  py::register_exception<etp::ConstructionError>(m, "ConstructionError", base_error.ptr());
  py::register_exception<etp::DimensionError>(m, "DimensionError", base_error.ptr());
  py::register_exception<etp::IndexError>(m, "IndexError", base_error.ptr());

  m.def("resolve_exp_base", &etp::resolve_exp_base, py::arg("group_count"));
  m.def(
      "distance_weight",
      [](const std::string& scheme, double distance, std::optional<double> exp_base,
         std::optional<double> heaviside_threshold, std::optional<double> heaviside_force) {
        etp::RegularizerSpec spec;
        spec.scheme = etp::parse_scheme(scheme);
        spec.exp_base = exp_base;
        spec.heaviside_threshold = heaviside_threshold;
        spec.heaviside_force = heaviside_force;
        return etp::distance_weight(spec, distance);
      },
      py::arg("scheme"), py::arg("distance"), py::arg("exp_base") = py::none(),
      py::arg("heaviside_threshold") = py::none(), py::arg("heaviside_force") = py::none());
  m.def("accuracy_drop", &etp::accuracy_drop, py::arg("base_metric"), py::arg("pruned_metric"));
  m.def(
      "speedup",
      [](std::uint64_t base, std::uint64_t pruned) {
        return etp::speedup(etp::MacsReport{{base}, base}, etp::MacsReport{{pruned}, pruned});
      },
      py::arg("base_macs"), py::arg("pruned_macs"));
  m.def("spearman", [](const std::vector<double>& x, const std::vector<double>& y) {
    return etp::spearman_correlation(x, y);
  });
  m.def("default_beta_grid",
        [] { return std::vector<double>(std::begin(etp::kDefaultBetaGrid), std::end(etp::kDefaultBetaGrid)); });

  py::class_<etp::TrainConfig>(m, "Config")
      .def_static("parse", &etp::parse_config, py::arg("text"))
      .def_static("load", &etp::load_config, py::arg("path"))
      .def("echo", &etp::config_echo)
      .def("hash", &etp::config_hash)
      .def_readwrite("seed", &etp::TrainConfig::seed)
      .def_readwrite("epochs", &etp::TrainConfig::epochs)
      .def_readwrite("out_dir", &etp::TrainConfig::out_dir)
      .def_property(
          "beta", [](const etp::TrainConfig& c) { return c.regularizer.reg_coefficient; },
          [](etp::TrainConfig& c, double beta) { c.regularizer.reg_coefficient = beta; })
      .def_property(
          "scheme", [](const etp::TrainConfig& c) { return std::string(etp::to_string(c.regularizer.scheme)); },
          [](etp::TrainConfig& c, const std::string& s) { c.regularizer.scheme = etp::parse_scheme(s); });

  py::class_<etp::ModelGraph>(m, "Model")
      .def(py::init([](const etp::TrainConfig& c) { return etp::build_model(c); }), py::arg("config"))
      .def_static("load", py::overload_cast<const std::filesystem::path&>(&etp::load_checkpoint), py::arg("path"))
      .def("save", [](const etp::ModelGraph& g, const std::filesystem::path& p) { etp::save_checkpoint(p, g); })
      .def_property_readonly("layer_count", [](const etp::ModelGraph& g) { return g.layers.size(); })
      .def_property_readonly("total_groups", &etp::ModelGraph::total_groups)
      .def("group_counts",
           [](const etp::ModelGraph& g) {
             std::vector<std::size_t> out;
             for (const auto& l : g.layers) out.push_back(l.group_count());
             return out;
           })
      .def("group_norms", [](const etp::ModelGraph& g, std::size_t layer) {
        if (layer >= g.layers.size()) throw etp::IndexError("layer " + std::to_string(layer) + " out of range");
        return etp::group_l2_norms(g.layers[layer]);
      })
      .def("macs",
           [](const etp::ModelGraph& g) {
             const auto r = etp::count_macs(g);
             return py::make_tuple(r.total, r.per_layer);
           })
      .def("plan_threshold", [](const etp::ModelGraph& g, double tau) { return plan_dict(etp::plan_by_threshold(g, tau)); })
      .def("plan_budget", [](const etp::ModelGraph& g, double target) { return plan_dict(etp::plan_by_budget(g, target)); })
      .def("prune", [](const etp::ModelGraph& g, const std::vector<std::pair<std::size_t, std::size_t>>& removals) {
        return etp::apply_plan(g, plan_from(g, removals));
      });

  m.def(
      "train",
      [](const etp::TrainConfig& config) {
        const auto data = etp::gen_dataset(config.dataset, config.dataset_seed());
        etp::TrainResult result;
        etp::EvalResult eval;
        {
          py::gil_scoped_release release;
          result = etp::train(config, data);
          eval = etp::evaluate(result.model, data.test);
        }
        return py::make_tuple(std::move(result.model), metrics_list(result.metrics), eval.metric());
      },
      py::arg("config"));

  m.def(
      "run_pipeline",
      [](const etp::TrainConfig& config) {
        const auto data = etp::gen_dataset(config.dataset, config.dataset_seed());
        etp::PipelineResult result;
        {
          py::gil_scoped_release release;
          result = etp::run_pipeline(config, data);
        }
        py::dict d = summary_dict(result.summary);
        d["plan"] = plan_dict(result.plan);
        return py::make_tuple(d, std::move(result.pruned));
      },
      py::arg("config"));

  m.def(
      "sweep",
      [](const etp::TrainConfig& config, const std::vector<double>& betas) {
        const auto data = etp::gen_dataset(config.dataset, config.dataset_seed());
        etp::SweepResult result;
        {
          py::gil_scoped_release release;
          result = etp::sweep(config, betas, data);
        }
        py::list rows;
        for (const auto& r : result.rows) rows.append(summary_dict(r));
        return rows;
      },
      py::arg("config"), py::arg("betas"));
}
