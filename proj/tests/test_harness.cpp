#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "tsa/checkpoint.hpp"
#include "tsa/experiment.hpp"
#include "tsa/variants.hpp"

using namespace tsa;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& leaf) {
  const fs::path dir = fs::temp_directory_path() / "tsa_harness_tests" / leaf;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ModelConfig smoke_model() {
  ModelConfig cfg;
  cfg.d = 8;
  cfg.d_in = 8;
  cfg.n_layers = 1;
  cfg.n_heads_self = 2;
  return cfg;
}

}  // namespace

TEST_CASE("resolve_variant: registry rows match the published wiring") {
  const VariantSpec ta = resolve_variant("Var-TA");
  CHECK(ta.use_text);
  CHECK(ta.use_audio);
  CHECK_FALSE(ta.use_video);
  CHECK_FALSE(ta.use_instructional);
  CHECK(ta.use_cross_modal);
  CHECK(ta.use_hier_fusion);

  const VariantSpec cihf = resolve_variant("Var-CIHF");
  CHECK(cihf.use_text);
  CHECK(cihf.use_audio);
  CHECK(cihf.use_video);
  CHECK(cihf.flavor == VideoFlavor::desc);
  CHECK_FALSE(cihf.use_instructional);

  const VariantSpec feac = resolve_variant("Var-FEAC");
  CHECK_FALSE(feac.use_hier_fusion);
  CHECK(feac.use_instructional);
  CHECK(feac.use_cross_modal);

  const VariantSpec fehf = resolve_variant("Var-FEHF");
  CHECK_FALSE(fehf.use_cross_modal);
  CHECK(fehf.use_instructional);

  const VariantSpec tarv = resolve_variant("Var-TARV");
  CHECK(tarv.flavor == VideoFlavor::raw);
  CHECK_FALSE(tarv.use_instructional);

  const VariantSpec tarvi = resolve_variant("Var-TARVI");
  CHECK(tarvi.flavor == VideoFlavor::raw);
  CHECK(tarvi.use_instructional);

  CHECK(variant_registry().size() == 12);
}

TEST_CASE("resolve_variant: unknown names list the registry, JT aliases abort") {
  CHECK_THROWS_WITH_AS(resolve_variant("Var-XYZ"), doctest::Contains("Var-TA"),
                       std::invalid_argument);
  for (const char* alias : {"Var-FECI", "Var-JI", "Var-JICI"}) {
    CHECK_THROWS_WITH_AS(resolve_variant(alias),
                         doctest::Contains("requires trainable encoders (JT)"),
                         std::runtime_error);
  }
}

TEST_CASE("param-count delta between full and Var-CIHF is exactly the instructional slice") {
  ModelConfig base = smoke_model();
  base.n_layers = 2;
  Rng r1(0), r2(0);
  ModelParams full = build_model(apply_variant(resolve_variant("full"), base), r1);
  ModelParams cihf = build_model(apply_variant(resolve_variant("Var-CIHF"), base), r2);

  const std::size_t instructional = full.param_count_with_prefix("instructional.");
  const std::size_t head_delta = base.d * base.d;  // (2d - d) * d on the fusion head
  CHECK(full.param_count() - cihf.param_count() == instructional + head_delta);

  // Closed form for the instructional slice.
  const std::size_t d = base.d, de = base.d, dff = 4 * base.d;
  const std::size_t embedder = base.n_stages * de + base.n_subjects * de + 2 * de * d + 3 * d;
  const std::size_t head = base.d / base.n_heads_self;
  const std::size_t per_layer = 3 * d * d + 2 * d            // cross + ln_cross
                                + 3 * base.n_heads_self * d * head + d * d + 2 * d  // self + ln
                                + d * dff + dff + dff * d + d + 2 * d;              // ffn + ln
  CHECK(instructional == embedder + d /*cls*/ + base.n_layers * per_layer);
}

TEST_CASE("every registry variant builds, trains one step, and evaluates on a smoke set") {
  const fs::path dir = scratch_dir("smoke");
  SynthConfig scfg;
  scfg.n_samples = 32;
  scfg.dim = 8;
  scfg.seed = 3;
  scfg.text_len = 3;
  scfg.audio_len = 3;
  scfg.video_len = 2;
  const Manifest manifest = synthesize(scfg, dir);
  const auto bundles = load_bundles(dir, manifest);

  for (const VariantSpec& spec : variant_registry()) {
    CAPTURE(spec.name);
    ModelConfig mcfg = apply_variant(spec, smoke_model());
    Rng rng(1);
    ModelParams params = build_model(mcfg, rng);
    std::vector<FeatureBundle> train_set(bundles.begin(), bundles.begin() + 24);
    std::vector<FeatureBundle> val_set(bundles.begin() + 24, bundles.end());
    TrainConfig tcfg;
    tcfg.max_epochs = 1;
    tcfg.batch_size = 8;
    tcfg.patience = 0;
    const TrainHistory h = train(params, train_set, val_set, tcfg);
    CHECK(h.epochs.size() == 1);
    const EvalResult ev = evaluate(params, val_set);
    CHECK(ev.report.wa >= 0.0);
    CHECK(ev.report.wa <= 1.0);
  }
  fs::remove_all(dir);
}

TEST_CASE("run_experiment writes the five artifacts and is seed-deterministic") {
  const fs::path data = scratch_dir("exp_data");
  SynthConfig scfg;
  scfg.n_samples = 60;
  scfg.dim = 8;
  scfg.seed = 1;
  scfg.text_len = 3;
  scfg.audio_len = 3;
  scfg.video_len = 2;
  synthesize(scfg, data);

  ExperimentConfig cfg;
  cfg.data_dir = data;
  cfg.out_dir = scratch_dir("exp_out_a");
  cfg.variant = "Var-TA";
  cfg.seed = 5;
  cfg.model = smoke_model();
  cfg.trainer.max_epochs = 2;
  cfg.trainer.batch_size = 8;
  cfg.trainer.patience = 0;

  const ExperimentResult res = run_experiment(cfg);
  for (const char* artifact :
       {"history.jsonl", "checkpoint.json", "metrics.json", "report.txt", "config.json"}) {
    CAPTURE(artifact);
    CHECK(fs::exists(cfg.out_dir / artifact));
  }
  CHECK(res.history.epochs.size() == 2);

  ExperimentConfig cfg2 = cfg;
  cfg2.out_dir = scratch_dir("exp_out_b");
  run_experiment(cfg2);
  CHECK(slurp(cfg.out_dir / "metrics.json") == slurp(cfg2.out_dir / "metrics.json"));
  CHECK(slurp(cfg.out_dir / "checkpoint.json") == slurp(cfg2.out_dir / "checkpoint.json"));

  // The checkpoint reloads and reproduces the persisted metrics.
  ModelParams loaded = load_checkpoint(cfg.out_dir / "checkpoint.json");
  CHECK(loaded.config.use_text);
  CHECK_FALSE(loaded.config.use_video);
  fs::remove_all(data.parent_path());
}

TEST_CASE("ablation suite emits one row per variant") {
  const fs::path data = scratch_dir("abl_data");
  SynthConfig scfg;
  scfg.n_samples = 60;
  scfg.dim = 8;
  scfg.seed = 2;
  scfg.text_len = 3;
  scfg.audio_len = 3;
  scfg.video_len = 2;
  synthesize(scfg, data);

  ExperimentConfig shared;
  shared.data_dir = data;
  shared.out_dir = scratch_dir("abl_out");
  shared.seed = 1;
  shared.model = smoke_model();
  shared.trainer.max_epochs = 1;
  shared.trainer.batch_size = 8;
  shared.trainer.patience = 0;

  const std::vector<std::string> names = {"Var-T", "Var-A", "Var-VD", "Var-TA", "full"};
  const auto rows = run_ablation_suite(names, shared);
  REQUIRE(rows.size() == 5);
  for (std::size_t i = 0; i < names.size(); ++i) CHECK(rows[i].variant == names[i]);
  const std::string table = render_ablation_table(rows);
  CHECK(table.find("Var-VD") != std::string::npos);
  CHECK(table.find("WA(%)") != std::string::npos);
  CHECK_THROWS(run_ablation_suite({}, shared));
  fs::remove_all(data.parent_path());
}

TEST_CASE("config files override model and trainer keys") {
  const fs::path dir = scratch_dir("cfg");
  {
    std::ofstream out(dir / "cfg.json");
    out << R"({"d": 16, "n_layers": 2, "lr": 0.0005, "batch_size": 4, "reduction": "sum",)"
        << R"( "strict_paper": true})";
  }
  ModelConfig m;
  TrainConfig t;
  apply_config_file(dir / "cfg.json", m, t);
  CHECK(m.d == 16);
  CHECK(m.n_layers == 2);
  CHECK(m.strict_paper);
  CHECK(t.lr == 0.0005);
  CHECK(t.batch_size == 4);
  CHECK(t.reduction == Reduction::sum);
  {
    std::ofstream out(dir / "bad.json");
    out << R"({"reduction": "median"})";
  }
  CHECK_THROWS(apply_config_file(dir / "bad.json", m, t));
  fs::remove_all(dir.parent_path());
}

TEST_CASE("model config json round trip") {
  ModelConfig cfg = smoke_model();
  cfg.use_video = false;
  cfg.video_flavor = VideoFlavor::raw;
  cfg.use_instructional = false;
  cfg.strict_paper = true;
  const ModelConfig back = model_config_from_json(model_config_to_json(cfg));
  CHECK(back.d == cfg.d);
  CHECK(back.n_layers == cfg.n_layers);
  CHECK(back.use_video == cfg.use_video);
  CHECK(back.video_flavor == cfg.video_flavor);
  CHECK(back.strict_paper == cfg.strict_paper);
}
