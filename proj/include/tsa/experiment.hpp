#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "tsa/dataset.hpp"
#include "tsa/trainer.hpp"
#include "tsa/variants.hpp"

namespace tsa {

struct ExperimentConfig {
  std::filesystem::path data_dir;
  std::filesystem::path out_dir;
  std::string variant = "full";
  std::uint64_t seed = 0;
  bool stratified_split = false;
  ModelConfig model;
  TrainConfig trainer;
};

struct ExperimentResult {
  MetricReport test_report;
  TrainHistory history;
  std::filesystem::path out_dir;
};

// Feature bundles aligned with the manifest record order.
std::vector<FeatureBundle> load_bundles(const std::filesystem::path& data_dir,
                                        const Manifest& manifest);

// 80/10/10 split, train with early stopping, evaluate on the test slice, and
// write history.jsonl, checkpoint.json, metrics.json, report.txt and
// config.json into out_dir. Deterministic given the seed.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

struct AblationRow {
  std::string variant;
  double wa = 0.0;
  double wf1 = 0.0;
};

// Each variant retrains from scratch on the same data and seed.
std::vector<AblationRow> run_ablation_suite(const std::vector<std::string>& variants,
                                            const ExperimentConfig& shared);
std::string render_ablation_table(const std::vector<AblationRow>& rows);

// Flat JSON file holding any subset of ModelConfig + TrainConfig keys.
void apply_config_file(const std::filesystem::path& path, ModelConfig& model,
                       TrainConfig& trainer);
std::string train_config_to_json(const TrainConfig& cfg);

}  // namespace tsa
