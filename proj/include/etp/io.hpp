#pragma once

// Output files. Every CSV starts with one `#` provenance line carrying the
// config hash and all seeds; every JSONL file starts with one provenance
// object. Column orders are fixed:
//
//   summary / sweep CSV: scheme,beta,seed,base_metric,pruned_metric,metric_drop,
//                        speedup,groups_removed,total_groups
//                        [,finetuned_metric,finetuned_drop] [,status]
//   metrics CSV:         epoch,step,task_loss,penalty_value,total_loss,
//                        train_accuracy,train_mae,train_mse,lr
//   trajectory JSONL:    {"epoch":int,"groups":[{"layer":int,"group":int,
//                         "index":int,"distance":int,"norm":float}]}
//   plan CSV:            layer,group,norm
//   MACs CSV:            layer,kind,groups,macs   (+ a final "total" row)

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>

#include "etp/config.hpp"
#include "etp/harness.hpp"
#include "etp/model.hpp"
#include "etp/pruner.hpp"

namespace etp {

struct Provenance {
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  std::uint64_t dataset_seed = 0;
  std::uint64_t indexing_seed = 0;
};

Provenance provenance_of(const TrainConfig& config);

void write_summary_csv(std::ostream& out, std::span<const SummaryRow> rows, const Provenance& prov,
                       bool with_status = false);
void write_metrics_csv(std::ostream& out, std::span<const MetricsRecord> records, const Provenance& prov);
void write_trajectory_jsonl(std::ostream& out, const NormTrajectory& trajectory, const Provenance& prov);
void write_plan_csv(std::ostream& out, const ModelGraph& model, const PrunePlan& plan, const Provenance& prov);
void write_macs_csv(std::ostream& out, const ModelGraph& model, const MacsReport& report);

// Text checkpoint: a header line, then per layer a description line and the
// weight and bias values in shortest round-trip decimal form.
void save_checkpoint(std::ostream& out, const ModelGraph& model);
ModelGraph load_checkpoint(std::istream& in);
void save_checkpoint(const std::filesystem::path& path, const ModelGraph& model);
ModelGraph load_checkpoint(const std::filesystem::path& path);

// Writes `content` to `path`, creating parent directories.
void write_file(const std::filesystem::path& path, const std::string& content);

}  // namespace etp
