#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include <json.hpp>

#include "etp/config.hpp"
#include "etp/errors.hpp"
#include "etp/harness.hpp"
#include "etp/io.hpp"

using namespace etp;

namespace {

// Base settings; `extra` lines replace keys of the same name.
TrainConfig small_config(const std::string& extra = "") {
  std::map<std::string, std::string> kv{{"layers", "dense:12:relu, dense:8:relu, dense:2"},
                                        {"dataset", "two_spirals"},
                                        {"dataset_size", "200"},
                                        {"epochs", "8"},
                                        {"batch_size", "16"},
                                        {"optimizer", "sgd_momentum"},
                                        {"lr", "0.05"},
                                        {"scheme", "exponential_etp"},
                                        {"beta", "1e-2"}};
  std::istringstream lines(extra);
  std::string line;
  while (std::getline(lines, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto key = line.substr(0, eq);
    key.erase(key.find_last_not_of(' ') + 1);
    kv[key] = line.substr(eq + 1);
  }
  std::string text;
  for (const auto& [k, v] : kv) text += k + " = " + v + "\n";
  return parse_config(text);
}

template <typename F>
std::string render(F&& f) {
  std::ostringstream out;
  f(out);
  return out.str();
}

}  // namespace

TEST_CASE("training logs") {
  const auto c = small_config("log_norms_every = 3\n");
  const auto data = gen_dataset(c.dataset, c.dataset_seed());
  const auto r = train(c, data);
  REQUIRE(r.metrics.size() == 8);
  CHECK(r.metrics.back().step == 8 * 10);
  for (const auto& m : r.metrics) {
    CHECK(m.penalty_value > 0.0);
    CHECK(m.total_loss == doctest::Approx(m.task_loss + 1e-2 * m.penalty_value));
  }
  // Epoch 0, every third epoch, and the last.
  std::vector<std::size_t> epochs;
  for (const auto& s : r.norms) epochs.push_back(s.epoch);
  CHECK(epochs == std::vector<std::size_t>{0, 3, 6, 8});
  for (const auto& s : r.norms) {
    CHECK(s.groups.size() == 22);
    for (const auto& g : s.groups) CHECK(g.norm >= 0.0);
  }
}

TEST_CASE("scheme none logs zero penalty") {
  const auto c = small_config("scheme = none\n");
  const auto data = gen_dataset(c.dataset, c.dataset_seed());
  for (const auto& m : train(c, data).metrics) CHECK(m.penalty_value == 0.0);
}

TEST_CASE("training is deterministic") {
  const auto c = small_config();
  const auto data = gen_dataset(c.dataset, c.dataset_seed());
  const auto a = train(c, data), b = train(c, data);
  const auto prov = provenance_of(c);
  CHECK(render([&](auto& o) { write_metrics_csv(o, a.metrics, prov); }) ==
        render([&](auto& o) { write_metrics_csv(o, b.metrics, prov); }));
  CHECK(render([&](auto& o) { write_trajectory_jsonl(o, a.norms, prov); }) ==
        render([&](auto& o) { write_trajectory_jsonl(o, b.norms, prov); }));
}

TEST_CASE("non-finite loss aborts with a location") {
  const auto c = small_config("lr = 1e300\nschedule = constant\nmomentum = 0\n");
  const auto data = gen_dataset(c.dataset, c.dataset_seed());
  try {
    train(c, data);
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("epoch") != std::string::npos);
  }
}

TEST_CASE("output width must match the dataset") {
  auto c = small_config();
  c.arch.layers.back().out = 3;
  const auto data = gen_dataset(c.dataset, c.dataset_seed());
  CHECK_THROWS_AS(train(c, data), ConfigError);
}

TEST_CASE("unregularized pipeline at a zero threshold") {
  const auto c = small_config("scheme = none\nprune_threshold = 1e-12\n");
  const auto data = gen_dataset(c.dataset, c.dataset_seed());
  const auto r = run_pipeline(c, data);
  CHECK(r.summary.speedup == 1.0);
  CHECK(r.summary.metric_drop == 0.0);
  CHECK(r.summary.groups_removed == 0);
  CHECK(r.summary.total_groups == 20);
}

TEST_CASE("budget pipeline reaches its target") {
  const auto c = small_config("prune_mode = budget\nprune_target = 2\n");
  const auto data = gen_dataset(c.dataset, c.dataset_seed());
  const auto r = run_pipeline(c, data);
  CHECK(r.summary.speedup >= 2.0);
  CHECK(r.summary.speedup == doctest::Approx(r.plan.predicted_speedup));
}

TEST_CASE("unreachable budget target") {
  const auto c = small_config("prune_mode = budget\nprune_target = 1000\n");
  const auto data = gen_dataset(c.dataset, c.dataset_seed());
  CHECK_THROWS_AS(run_pipeline(c, data), UnreachableTarget);
}

TEST_CASE("fine-tuning adds columns") {
  const auto c = small_config("finetune_epochs = 2\n");
  const auto data = gen_dataset(c.dataset, c.dataset_seed());
  const auto r = run_pipeline(c, data);
  REQUIRE(r.summary.finetuned_metric.has_value());
  const std::vector<SummaryRow> rows{r.summary};
  const auto csv = render([&](auto& o) { write_summary_csv(o, rows, provenance_of(c)); });
  CHECK(csv.find("total_groups,finetuned_metric,finetuned_drop\n") != std::string::npos);
}

TEST_CASE("sweep rows") {
  const auto c = small_config();
  const auto data = gen_dataset(c.dataset, c.dataset_seed());
  const std::vector<double> betas{0.0, 1e-3, 1e-1};
  const auto r = sweep(c, betas, data);
  REQUIRE(r.rows.size() == 3);
  bool saw_zero = false;
  for (const auto& row : r.rows) {
    CHECK(row.status == "ok");
    if (row.beta == 0.0) {
      saw_zero = true;
      CHECK(row.speedup == 1.0);
    }
  }
  CHECK(saw_zero);
  for (std::size_t i = 1; i < r.rows.size(); ++i) CHECK(r.rows[i - 1].speedup <= r.rows[i].speedup);
  CHECK_THROWS_AS(sweep(c, std::vector<double>{}, data), ConfigError);
}

TEST_CASE("failed sweep entries are reported, not fatal") {
  const auto c = small_config("prune_mode = budget\nprune_target = 1000\n");
  const auto data = gen_dataset(c.dataset, c.dataset_seed());
  const auto r = sweep(c, std::vector<double>{1e-3}, data);
  REQUIRE(r.rows.size() == 1);
  CHECK(r.rows[0].status.rfind("failed:", 0) == 0);
}

TEST_CASE("spearman") {
  CHECK(spearman_correlation(std::vector<double>{1, 2, 3}, std::vector<double>{10, 20, 30}) == doctest::Approx(1.0));
  CHECK(spearman_correlation(std::vector<double>{1, 2, 3}, std::vector<double>{3, 2, 1}) == doctest::Approx(-1.0));
  CHECK(spearman_correlation(std::vector<double>{1, 2, 3}, std::vector<double>{1, 1, 1}) == 0.0);
  CHECK(spearman_correlation(std::vector<double>{1, 2, 3, 4}, std::vector<double>{1, 1, 2, 2}) ==
        doctest::Approx(0.894427191).epsilon(1e-9));
}

TEST_CASE("file formats") {
  const auto c = small_config();
  const auto data = gen_dataset(c.dataset, c.dataset_seed());
  const auto r = run_pipeline(c, data);
  const auto prov = provenance_of(c);

  const std::vector<SummaryRow> rows{r.summary};
  std::istringstream csv(render([&](auto& o) { write_summary_csv(o, rows, prov); }));
  std::string line;
  std::getline(csv, line);
  CHECK(line.rfind("# etp config_hash=", 0) == 0);
  CHECK(line.find("seed=0") != std::string::npos);
  std::getline(csv, line);
  CHECK(line == "scheme,beta,seed,base_metric,pruned_metric,metric_drop,speedup,groups_removed,total_groups");
  std::getline(csv, line);
  CHECK(line.rfind("exponential_etp,0.01,0,", 0) == 0);

  std::istringstream jsonl(render([&](auto& o) { write_trajectory_jsonl(o, r.regularized.norms, prov); }));
  std::getline(jsonl, line);
  CHECK(nlohmann::json::parse(line).contains("config_hash"));
  while (std::getline(jsonl, line)) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j["epoch"].is_number_integer());
    for (const auto& g : j["groups"]) {
      CHECK(g.size() == 5);
      CHECK(g["layer"].is_number_integer());
      CHECK(g["distance"].is_number_integer());
      CHECK(g["norm"].is_number());
    }
  }
}

TEST_CASE("checkpoints round trip exactly") {
  const auto c = small_config();
  const auto data = gen_dataset(c.dataset, c.dataset_seed());
  const auto model = train(c, data).model;
  std::stringstream buf;
  save_checkpoint(buf, model);
  const auto loaded = load_checkpoint(buf);
  REQUIRE(loaded.layers.size() == model.layers.size());
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    CHECK(loaded.layers[l].weight.data == model.layers[l].weight.data);
    CHECK(loaded.layers[l].bias.data == model.layers[l].bias.data);
    CHECK(loaded.layers[l].prunable == model.layers[l].prunable);
  }
  std::istringstream junk("not a checkpoint");
  CHECK_THROWS_AS(load_checkpoint(junk), ConstructionError);
}
