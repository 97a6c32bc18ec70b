#include "tsa/experiment.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "tsa/checkpoint.hpp"

namespace tsa {

namespace {

using nlohmann::json;

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
}

}  // namespace

std::vector<FeatureBundle> load_bundles(const std::filesystem::path& data_dir,
                                        const Manifest& manifest) {
  std::vector<FeatureBundle> bundles;
  bundles.reserve(manifest.size());
  for (const SampleRecord& rec : manifest.records) {
    bundles.push_back(load_feature_bundle(data_dir / "features" / (rec.name + ".json")));
  }
  return bundles;
}

std::string train_config_to_json(const TrainConfig& cfg) {
  json j;
  j["lr"] = cfg.lr;
  j["batch_size"] = cfg.batch_size;
  j["max_epochs"] = cfg.max_epochs;
  j["patience"] = cfg.patience;
  j["seed"] = cfg.seed;
  j["k_folds"] = cfg.k_folds;
  j["weight_decay"] = cfg.weight_decay;
  j["beta1"] = cfg.beta1;
  j["beta2"] = cfg.beta2;
  j["eps"] = cfg.eps;
  j["reduction"] = cfg.reduction == Reduction::mean ? "mean" : "sum";
  j["parallel"] = cfg.parallel;
  return j.dump(2);
}

void apply_config_file(const std::filesystem::path& path, ModelConfig& model,
                       TrainConfig& trainer) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw std::runtime_error("config file " + path.string() + ": " + e.what());
  }
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("d", model.d);
  get("d_in", model.d_in);
  get("n_layers", model.n_layers);
  get("n_heads_self", model.n_heads_self);
  get("d_ff", model.d_ff);
  get("d_e", model.d_e);
  get("n_stages", model.n_stages);
  get("n_subjects", model.n_subjects);
  get("strict_paper", model.strict_paper);
  get("cross_residual", model.cross_residual);
  get("use_raw_hd", model.use_raw_hd);
  get("layer_norm_eps", model.layer_norm_eps);
  get("lr", trainer.lr);
  get("batch_size", trainer.batch_size);
  get("max_epochs", trainer.max_epochs);
  get("patience", trainer.patience);
  get("k_folds", trainer.k_folds);
  get("weight_decay", trainer.weight_decay);
  get("beta1", trainer.beta1);
  get("beta2", trainer.beta2);
  get("eps", trainer.eps);
  get("parallel", trainer.parallel);
  if (j.contains("reduction")) {
    const auto r = j.at("reduction").get<std::string>();
    if (r == "mean") {
      trainer.reduction = Reduction::mean;
    } else if (r == "sum") {
      trainer.reduction = Reduction::sum;
    } else {
      throw std::runtime_error("config file: reduction must be 'mean' or 'sum'");
    }
  }
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  const Manifest manifest = load_manifest(cfg.data_dir / "manifest.jsonl");
  if (manifest.records.empty()) throw std::runtime_error("run_experiment: empty manifest");
  const std::vector<FeatureBundle> bundles = load_bundles(cfg.data_dir, manifest);

  const VariantSpec spec = resolve_variant(cfg.variant);
  ModelConfig mcfg = apply_variant(spec, cfg.model);
  mcfg.d_in = bundles.front().feature_dim();

  TrainConfig tcfg = cfg.trainer;
  tcfg.seed = cfg.seed;

  const SplitSpec sp = split(manifest, {0.8, 0.1, 0.1}, cfg.seed, cfg.stratified_split);
  auto gather = [&](const std::vector<std::size_t>& idx) {
    std::vector<FeatureBundle> out;
    out.reserve(idx.size());
    for (std::size_t i : idx) out.push_back(bundles[i]);
    return out;
  };
  std::vector<FeatureBundle> train_set = gather(sp.train);
  std::vector<FeatureBundle> val_set = gather(sp.val);
  std::vector<FeatureBundle> test_set = gather(sp.test);

  Rng init_rng(cfg.seed);
  ModelParams params = build_model(mcfg, init_rng);
  TrainHistory history = train(params, train_set, val_set, tcfg);
  EvalResult test = evaluate(params, test_set, Reduction::mean, tcfg.parallel);

  std::filesystem::create_directories(cfg.out_dir);
  write_file(cfg.out_dir / "history.jsonl", history_to_jsonl(history));
  save_checkpoint(params, cfg.out_dir / "checkpoint.json");
  write_file(cfg.out_dir / "metrics.json", report_to_json(test.report));
  write_file(cfg.out_dir / "report.txt", render_report(test.report));
  json snapshot;
  snapshot["variant"] = cfg.variant;
  snapshot["seed"] = cfg.seed;
  snapshot["data_dir"] = cfg.data_dir.string();
  snapshot["stratified_split"] = cfg.stratified_split;
  snapshot["model"] = json::parse(model_config_to_json(mcfg));
  snapshot["trainer"] = json::parse(train_config_to_json(tcfg));
  write_file(cfg.out_dir / "config.json", snapshot.dump(2) + "\n");

  ExperimentResult result;
  result.test_report = test.report;
  result.history = std::move(history);
  result.out_dir = cfg.out_dir;
  return result;
}

std::vector<AblationRow> run_ablation_suite(const std::vector<std::string>& variants,
                                            const ExperimentConfig& shared) {
  if (variants.empty()) throw std::invalid_argument("run_ablation_suite: no variants");
  std::vector<AblationRow> rows;
  for (const std::string& name : variants) {
    ExperimentConfig cfg = shared;
    cfg.variant = name;
    cfg.out_dir = shared.out_dir / name;
    const ExperimentResult res = run_experiment(cfg);
    rows.push_back({name, res.test_report.wa, res.test_report.wf1});
  }
  return rows;
}

std::string render_ablation_table(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os << std::left << std::setw(12) << "Variant" << std::right << std::setw(10) << "WA(%)"
     << std::setw(10) << "W-F1(%)" << '\n';
  os << std::fixed << std::setprecision(2);
  for (const AblationRow& r : rows) {
    os << std::left << std::setw(12) << r.variant << std::right << std::setw(10) << r.wa * 100.0
       << std::setw(10) << r.wf1 * 100.0 << '\n';
  }
  return os.str();
}

}  // namespace tsa
