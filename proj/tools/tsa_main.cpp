// Experiment runner: dataset generation, training, evaluation, ablations,
// gradient checks and the annotation-pipeline simulation.
#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "tsa/checkpoint.hpp"
#include "tsa/experiment.hpp"
#include "tsa/gradcheck_suite.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// TMED_SEED wins over --seed and config files.
void apply_seed_env(std::uint64_t& seed) {
  if (const char* env = std::getenv("TMED_SEED")) {
    seed = std::strtoull(env, nullptr, 10);
  }
}

std::vector<std::string> split_csv(const std::string& csv) {
  std::vector<std::string> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

int cmd_gen(const std::string& out, std::size_t n, std::uint64_t seed, std::size_t dim) {
  tsa::SynthConfig cfg;
  cfg.n_samples = n;
  cfg.seed = seed;
  cfg.dim = dim;
  const tsa::Manifest manifest = tsa::synthesize(cfg, out);
  const tsa::ClassDistribution dist = tsa::class_distribution(manifest);
  std::cout << "wrote " << manifest.size() << " samples to " << out << "\n";
  for (int c = 0; c < tsa::kNumClasses; ++c) {
    std::cout << "  " << tsa::to_string(static_cast<tsa::EmotionLabel>(c)) << ": "
              << dist.counts[static_cast<std::size_t>(c)] << "\n";
  }
  return 0;
}

int cmd_train(tsa::ExperimentConfig cfg, int kfold) {
  if (kfold > 0) {
    const tsa::Manifest manifest = tsa::load_manifest(cfg.data_dir / "manifest.jsonl");
    const auto bundles = tsa::load_bundles(cfg.data_dir, manifest);
    tsa::ModelConfig mcfg = tsa::apply_variant(tsa::resolve_variant(cfg.variant), cfg.model);
    mcfg.d_in = bundles.front().feature_dim();
    tsa::TrainConfig tcfg = cfg.trainer;
    tcfg.seed = cfg.seed;
    tcfg.k_folds = kfold;
    const tsa::KFoldResult res = tsa::run_kfold(manifest, bundles, mcfg, tcfg);
    std::cout << "fold WA:";
    for (const auto& fr : res.folds) std::cout << ' ' << fr.report.wa * 100.0;
    std::cout << "\nWA " << res.mean_wa * 100.0 << " +- " << res.sd_wa * 100.0 << "  W-F1 "
              << res.mean_wf1 * 100.0 << " +- " << res.sd_wf1 * 100.0 << "\n";
    return 0;
  }
  const tsa::ExperimentResult res = tsa::run_experiment(cfg);
  std::cout << "best epoch " << res.history.best_epoch << " (" << res.history.stop_reason
            << ")\n"
            << "test WA " << res.test_report.wa * 100.0 << "  W-F1 " << res.test_report.wf1 * 100.0
            << "  M-F1 " << res.test_report.mf1 * 100.0 << "\n"
            << "artifacts in " << res.out_dir.string() << "\n";
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& data) {
  tsa::ModelParams params = tsa::load_checkpoint(checkpoint);
  const tsa::Manifest manifest = tsa::load_manifest(fs::path(data) / "manifest.jsonl");
  auto bundles = tsa::load_bundles(data, manifest);
  const tsa::EvalResult res = tsa::evaluate(params, bundles);
  std::cout << tsa::render_report(res.report);
  std::cout << tsa::report_to_json(res.report) << "\n";
  return 0;
}

int cmd_ablate(const std::string& variants_csv, tsa::ExperimentConfig shared) {
  const auto rows = tsa::run_ablation_suite(split_csv(variants_csv), shared);
  std::cout << tsa::render_ablation_table(rows);
  return 0;
}

int cmd_gradcheck(std::size_t dim) {
  const auto results = tsa::run_gradcheck_suite(dim);
  bool all_pass = true;
  for (const auto& r : results) {
    std::cout << (r.report.pass ? "PASS" : "FAIL") << "  " << r.name
              << "  max_rel_err=" << r.report.max_rel_err << " (" << r.report.coords_checked
              << " coords)\n";
    all_pass = all_pass && r.report.pass;
  }
  return all_pass ? 0 : 1;
}

int cmd_annotate_sim(const std::string& data, double expert_acc, double pilot_frac,
                     std::uint64_t seed, const std::string& config_file) {
  const tsa::Manifest manifest = tsa::load_manifest(fs::path(data) / "manifest.jsonl");
  const auto bundles = tsa::load_bundles(data, manifest);

  tsa::ModelConfig mcfg;
  mcfg.d = 16;
  mcfg.n_layers = 1;
  mcfg.n_heads_self = 4;
  tsa::TrainConfig tcfg;
  tcfg.max_epochs = 15;
  if (!config_file.empty()) tsa::apply_config_file(config_file, mcfg, tcfg);
  mcfg.d_in = bundles.front().feature_dim();
  tcfg.seed = seed;

  tsa::Rng init_rng(seed);
  auto params = std::make_shared<tsa::ModelParams>(tsa::build_model(mcfg, init_rng));

  tsa::AnnotationLabeler labeler;
  labeler.predict = [params, &bundles](std::size_t i) {
    tsa::Graph g;
    return static_cast<tsa::EmotionLabel>(
        tsa::model_forward(g, *params, bundles[i], false).predicted);
  };
  labeler.fine_tune = [params, &bundles, tcfg](const std::vector<std::size_t>& idx,
                                               const std::vector<tsa::EmotionLabel>& labels) {
    std::vector<tsa::FeatureBundle> corrected;
    corrected.reserve(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      tsa::FeatureBundle b = bundles[idx[i]];
      b.label = labels[i];
      corrected.push_back(std::move(b));
    }
    // Last tenth of the corrected pilot doubles as the early-stop slice.
    const std::size_t n_val = std::max<std::size_t>(1, corrected.size() / 10);
    std::vector<tsa::FeatureBundle> val(corrected.end() - static_cast<long>(n_val),
                                        corrected.end());
    corrected.resize(corrected.size() - n_val);
    tsa::train(*params, corrected, val, tcfg);
  };

  tsa::Rng rng(seed);
  const tsa::PipelineReport report =
      tsa::simulate_annotation_pipeline(manifest, labeler, expert_acc, pilot_frac, rng);
  json j;
  j["pilot_size"] = report.pilot_size;
  j["corrected"] = report.corrected;
  j["auto_labeled"] = report.auto_labeled;
  j["accepted"] = report.accepted;
  j["discarded"] = report.discarded;
  j["retention"] = report.retention;
  j["accepted_accuracy"] = report.accepted_accuracy;
  j["prevote_accuracy"] = report.prevote_accuracy;
  std::cout << j.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Audio-centric multimodal teacher sentiment analysis"};
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "Generate a synthetic dataset");
  std::string gen_out = "data";
  std::size_t gen_n = 2000, gen_dim = 32;
  std::uint64_t gen_seed = 0;
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--n", gen_n, "Number of samples");
  gen->add_option("--seed", gen_seed, "Random seed");
  gen->add_option("--dim", gen_dim, "Feature dimension");

  // train
  auto* train = app.add_subcommand("train", "Train a variant on a data directory");
  tsa::ExperimentConfig tr_cfg;
  std::string tr_data, tr_out = "runs/latest", tr_variant = "full", tr_config;
  std::uint64_t tr_seed = 0;
  int tr_kfold = 0;
  bool tr_stratified = false;
  train->add_option("--data", tr_data, "Data directory")->required();
  train->add_option("--variant", tr_variant, "Variant name (see 'ablate' registry)");
  train->add_option("--config", tr_config, "Flat JSON config file");
  train->add_option("--out", tr_out, "Artifact directory");
  train->add_option("--seed", tr_seed, "Random seed");
  train->add_option("--kfold", tr_kfold, "Run k-fold cross-validation instead of the 80/10/10 split");
  train->add_flag("--stratified", tr_stratified, "Stratify the split by class");

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a data directory");
  std::string ev_checkpoint, ev_data;
  eval->add_option("--checkpoint", ev_checkpoint, "Checkpoint file")->required();
  eval->add_option("--data", ev_data, "Data directory")->required();

  // ablate
  auto* ablate = app.add_subcommand("ablate", "Run an ablation suite");
  std::string ab_variants = "Var-T,Var-A,Var-VD,Var-TA,full";
  std::string ab_data, ab_out = "runs/ablation", ab_config;
  std::uint64_t ab_seed = 0;
  ablate->add_option("--variants", ab_variants, "Comma-separated variant names");
  ablate->add_option("--data", ab_data, "Data directory")->required();
  ablate->add_option("--config", ab_config, "Flat JSON config file");
  ablate->add_option("--out", ab_out, "Artifact directory");
  ablate->add_option("--seed", ab_seed, "Random seed");

  // gradcheck
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  std::size_t gc_dim = 8;
  gradcheck->add_option("--dim", gc_dim, "Model width for the full-model check");

  // annotate-sim
  auto* annotate = app.add_subcommand("annotate-sim", "Simulate the annotation pipeline");
  std::string an_data, an_config;
  double an_q = 0.9, an_pilot = 0.10;
  std::uint64_t an_seed = 0;
  annotate->add_option("--data", an_data, "Data directory")->required();
  annotate->add_option("--expert-acc", an_q, "Expert accuracy q");
  annotate->add_option("--pilot-frac", an_pilot, "Pilot fraction");
  annotate->add_option("--seed", an_seed, "Random seed");
  annotate->add_option("--config", an_config, "Flat JSON config file");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      apply_seed_env(gen_seed);
      return cmd_gen(gen_out, gen_n, gen_seed, gen_dim);
    }
    if (train->parsed()) {
      apply_seed_env(tr_seed);
      tr_cfg.data_dir = tr_data;
      tr_cfg.out_dir = tr_out;
      tr_cfg.variant = tr_variant;
      tr_cfg.seed = tr_seed;
      tr_cfg.stratified_split = tr_stratified;
      if (!tr_config.empty()) tsa::apply_config_file(tr_config, tr_cfg.model, tr_cfg.trainer);
      return cmd_train(std::move(tr_cfg), tr_kfold);
    }
    if (eval->parsed()) return cmd_eval(ev_checkpoint, ev_data);
    if (ablate->parsed()) {
      apply_seed_env(ab_seed);
      tsa::ExperimentConfig shared;
      shared.data_dir = ab_data;
      shared.out_dir = ab_out;
      shared.seed = ab_seed;
      if (!ab_config.empty()) tsa::apply_config_file(ab_config, shared.model, shared.trainer);
      return cmd_ablate(ab_variants, std::move(shared));
    }
    if (gradcheck->parsed()) return cmd_gradcheck(gc_dim);
    if (annotate->parsed()) {
      apply_seed_env(an_seed);
      return cmd_annotate_sim(an_data, an_q, an_pilot, an_seed, an_config);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
