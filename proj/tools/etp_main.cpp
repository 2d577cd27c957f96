// etp: train, prune and sweep distance-weighted group-regularized models.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "etp/config.hpp"
#include "etp/dataset.hpp"
#include "etp/errors.hpp"
#include "etp/harness.hpp"
#include "etp/io.hpp"
#include "etp/pruner.hpp"

namespace fs = std::filesystem;

namespace {

enum ExitCode : int { kOk = 0, kConfigError = 1, kNumericalAbort = 2, kUnreachableTarget = 3 };

struct CommonFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<std::size_t> log_norms_every;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("config", flags.config_path, "Experiment config file (key = value lines)")->required();
  cmd->add_option("--seed", flags.seed, "Override the global seed");
  cmd->add_option("--out-dir", flags.out_dir, "Override the output directory");
  cmd->add_option("--log-norms-every", flags.log_norms_every, "Log group norms every N epochs");
}

etp::TrainConfig load(const CommonFlags& flags) {
  auto config = etp::load_config(flags.config_path);
  if (flags.seed) config.seed = *flags.seed;
  if (flags.out_dir) config.out_dir = *flags.out_dir;
  if (flags.log_norms_every) config.log_norms_every = *flags.log_norms_every;
  etp::validate_config(config);
  return config;
}

template <typename Writer>
std::string render(Writer&& writer) {
  std::ostringstream out;
  writer(out);
  return out.str();
}

void print_summary(const etp::SummaryRow& row) {
  std::printf("scheme=%s beta=%s base=%s pruned=%s drop=%s speedup=%s removed=%zu/%zu\n",
              std::string(etp::to_string(row.scheme)).c_str(), etp::format_double(row.beta).c_str(),
              etp::format_double(row.base_metric).c_str(), etp::format_double(row.pruned_metric).c_str(),
              etp::format_double(row.metric_drop).c_str(), etp::format_double(row.speedup).c_str(),
              row.groups_removed, row.total_groups);
}

int cmd_train(const CommonFlags& flags) {
  const auto config = load(flags);
  const auto data = etp::gen_dataset(config.dataset, config.dataset_seed());
  const auto result = etp::train(config, data);
  const auto prov = etp::provenance_of(config);
  const fs::path dir = config.out_dir;
  etp::write_file(dir / "config.txt", etp::config_echo(config));
  etp::write_file(dir / "metrics.csv", render([&](auto& o) { etp::write_metrics_csv(o, result.metrics, prov); }));
  etp::write_file(dir / "norms.jsonl", render([&](auto& o) { etp::write_trajectory_jsonl(o, result.norms, prov); }));
  etp::save_checkpoint(dir / "model.ckpt", result.model);
  const auto eval = etp::evaluate(result.model, data.test);
  const auto& last = result.metrics.back();
  std::printf("epochs=%zu task_loss=%s penalty=%s test_metric=%s\n", last.epoch,
              etp::format_double(last.task_loss).c_str(), etp::format_double(last.penalty_value).c_str(),
              etp::format_double(eval.metric()).c_str());
  return kOk;
}

int cmd_prune(const CommonFlags& flags, const std::string& checkpoint) {
  const auto config = load(flags);
  const auto model = etp::load_checkpoint(fs::path(checkpoint));
  const auto plan = config.prune_mode == etp::PruneMode::threshold ? etp::plan_by_threshold(model, config.prune_threshold)
                                                                   : etp::plan_by_budget(model, config.prune_target);
  const auto pruned = etp::apply_plan(model, plan);
  const auto prov = etp::provenance_of(config);
  const fs::path dir = config.out_dir;
  etp::save_checkpoint(dir / "pruned.ckpt", pruned);
  etp::write_file(dir / "plan.csv", render([&](auto& o) { etp::write_plan_csv(o, model, plan, prov); }));
  etp::write_file(dir / "macs.csv",
                  render([&](auto& o) { etp::write_macs_csv(o, pruned, etp::count_macs(pruned)); }));

  const auto data = etp::gen_dataset(config.dataset, config.dataset_seed());
  const double before = etp::evaluate(model, data.test).metric();
  const double after = etp::evaluate(pruned, data.test).metric();
  std::printf("removed=%zu speedup=%s base_metric=%s pruned_metric=%s drop=%s\n", plan.removals.size(),
              etp::format_double(etp::speedup(etp::count_macs(model), etp::count_macs(pruned))).c_str(),
              etp::format_double(before).c_str(), etp::format_double(after).c_str(),
              etp::format_double(etp::accuracy_drop(before, after)).c_str());
  return kOk;
}

int cmd_pipeline(const CommonFlags& flags) {
  const auto config = load(flags);
  const auto data = etp::gen_dataset(config.dataset, config.dataset_seed());
  const auto result = etp::run_pipeline(config, data);
  const auto prov = etp::provenance_of(config);
  const fs::path dir = config.out_dir;
  const std::vector<etp::SummaryRow> rows{result.summary};
  etp::write_file(dir / "config.txt", etp::config_echo(config));
  etp::write_file(dir / "summary.csv", render([&](auto& o) { etp::write_summary_csv(o, rows, prov); }));
  etp::write_file(dir / "base_metrics.csv",
                  render([&](auto& o) { etp::write_metrics_csv(o, result.base.metrics, prov); }));
  etp::write_file(dir / "base_norms.jsonl",
                  render([&](auto& o) { etp::write_trajectory_jsonl(o, result.base.norms, prov); }));
  etp::write_file(dir / "reg_metrics.csv",
                  render([&](auto& o) { etp::write_metrics_csv(o, result.regularized.metrics, prov); }));
  etp::write_file(dir / "reg_norms.jsonl",
                  render([&](auto& o) { etp::write_trajectory_jsonl(o, result.regularized.norms, prov); }));
  etp::write_file(dir / "plan.csv",
                  render([&](auto& o) { etp::write_plan_csv(o, result.regularized.model, result.plan, prov); }));
  etp::save_checkpoint(dir / "reg.ckpt", result.regularized.model);
  etp::save_checkpoint(dir / "pruned.ckpt", result.pruned);
  print_summary(result.summary);
  return kOk;
}

int cmd_sweep(const CommonFlags& flags, const std::string& betas_text) {
  auto config = load(flags);
  std::vector<double> betas = etp::parse_double_list("--betas", betas_text);
  if (betas.empty()) betas = config.sweep_betas;
  if (betas.empty()) betas.assign(std::begin(etp::kDefaultBetaGrid), std::end(etp::kDefaultBetaGrid));
  const auto data = etp::gen_dataset(config.dataset, config.dataset_seed());
  const auto result = etp::sweep(config, betas, data);
  const auto prov = etp::provenance_of(config);
  const fs::path dir = config.out_dir;
  etp::write_file(dir / "config.txt", etp::config_echo(config));
  etp::write_file(dir / "sweep.csv", render([&](auto& o) { etp::write_summary_csv(o, result.rows, prov, true); }));

  std::vector<double> xs, ys;
  for (const auto& row : result.rows) {
    if (row.status != "ok") {
      std::printf("beta=%s %s\n", etp::format_double(row.beta).c_str(), row.status.c_str());
      continue;
    }
    print_summary(row);
    xs.push_back(row.beta);
    ys.push_back(row.speedup);
  }
  std::printf("spearman(beta, speedup)=%s\n", etp::format_double(etp::spearman_correlation(xs, ys)).c_str());
  return kOk;
}

int cmd_macs(const CommonFlags& flags) {
  const auto config = load(flags);
  const auto model = etp::build_model(config);
  etp::write_macs_csv(std::cout, model, etp::count_macs(model));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distance-weighted group regularization and structured pruning"};
  app.require_subcommand(1);

  CommonFlags train_flags, prune_flags, pipeline_flags, sweep_flags, macs_flags;
  std::string checkpoint;
  std::string betas;

  auto* train = app.add_subcommand("train", "Train one model and log metrics and group norms");
  add_common(train, train_flags);
  auto* prune = app.add_subcommand("prune", "Prune a checkpoint per the config's prune mode");
  add_common(prune, prune_flags);
  prune->add_option("--checkpoint", checkpoint, "Checkpoint written by train or pipeline")->required();
  auto* pipeline = app.add_subcommand("pipeline", "Train base and regularized models, prune, and summarize");
  add_common(pipeline, pipeline_flags);
  auto* sweep = app.add_subcommand("sweep", "Run the pipeline over a list of regularization coefficients");
  add_common(sweep, sweep_flags);
  sweep->add_option("--betas", betas, "Comma separated coefficients (default: config sweep_betas or the standard grid)");
  auto* macs = app.add_subcommand("macs", "Print per-layer multiply-accumulate counts");
  add_common(macs, macs_flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // Usage errors count as config errors; --help exits 0.
    return app.exit(e) == 0 ? kOk : kConfigError;
  }

  try {
    if (*train) return cmd_train(train_flags);
    if (*prune) return cmd_prune(prune_flags, checkpoint);
    if (*pipeline) return cmd_pipeline(pipeline_flags);
    if (*sweep) return cmd_sweep(sweep_flags, betas);
    if (*macs) return cmd_macs(macs_flags);
  } catch (const etp::UnreachableTarget& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUnreachableTarget;
  } catch (const etp::NumericalError& e) {
    std::fprintf(stderr, "numerical abort: %s\n", e.what());
    return kNumericalAbort;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kConfigError;
  }
  return kOk;
}
