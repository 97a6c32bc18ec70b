#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "tsa/features.hpp"
#include "tsa/rng.hpp"

using namespace tsa;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = scale * rng.normal();
  return t;
}

struct EmbedderFixture {
  ParamStore store;
  InstructionalEmbedderParams params;

  EmbedderFixture(std::size_t d_e, std::size_t d, Rng& rng, bool zero_wc = false) {
    params.e_stage = &store.add("e_stage", random_tensor({4, d_e}, rng, 0.5));
    params.e_subject = &store.add("e_subject", random_tensor({11, d_e}, rng, 0.5));
    params.w_c = &store.add("w_c", zero_wc ? Tensor({2 * d_e, d})
                                           : random_tensor({2 * d_e, d}, rng, 0.4));
    params.b_c = &store.add("b_c", Tensor({d}));
    Tensor ones({d});
    ones.fill(1.0);
    params.gamma = &store.add("gamma", std::move(ones));
    params.beta = &store.add("beta", Tensor({d}));
  }
};

}  // namespace

TEST_CASE("embed_instructional: zero weights collapse to beta") {
  Rng rng(1);
  EmbedderFixture fx(6, 8, rng, /*zero_wc=*/true);
  Tensor beta0({8});
  for (std::size_t i = 0; i < 8; ++i) beta0[i] = 0.125 * double(i + 1);
  fx.params.beta->value = beta0;
  Graph g;
  const Tensor& h = g.value(embed_instructional(g, fx.params, 2, 5));
  REQUIRE(h.shape() == std::vector<std::size_t>{1, 8});
  // GELU(0) = 0 and LayerNorm of a zero slice keeps only beta.
  for (std::size_t i = 0; i < 8; ++i) CHECK(h[i] == doctest::Approx(beta0[i]));
}

TEST_CASE("embed_instructional: output width equals the configured model dim") {
  Rng rng(2);
  EmbedderFixture fx(32, 32, rng);
  Graph g;
  CHECK(g.value(embed_instructional(g, fx.params, 0, 0)).cols() == 32);
  EmbedderFixture wide(16, 48, rng);
  Graph g2;
  CHECK(g2.value(embed_instructional(g2, wide.params, 3, 10)).cols() == 48);
}

TEST_CASE("embed_instructional matches the step-by-step composition oracle") {
  Rng rng(3);
  const std::size_t d_e = 5, d = 7;
  EmbedderFixture fx(d_e, d, rng);
  for (double& v : fx.params.gamma->value.values()) v = rng.normal();
  for (double& v : fx.params.beta->value.values()) v = rng.normal();
  const int stage = 1, subject = 7;
  Graph g;
  const Tensor& got = g.value(embed_instructional(g, fx.params, stage, subject));

  // Hand composition: lookup, concat, affine, exact-erf GELU, layer norm.
  std::vector<double> joint(2 * d_e);
  for (std::size_t j = 0; j < d_e; ++j) {
    joint[j] = fx.params.e_stage->value.at(stage, j);
    joint[d_e + j] = fx.params.e_subject->value.at(subject, j);
  }
  std::vector<double> pre(d, 0.0);
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t i = 0; i < 2 * d_e; ++i) {
      pre[j] += joint[i] * fx.params.w_c->value.at(i, j);
    }
    pre[j] += fx.params.b_c->value[j];
    pre[j] = pre[j] * 0.5 * std::erfc(-pre[j] / std::sqrt(2.0));
  }
  double mean = 0.0;
  for (double v : pre) mean += v;
  mean /= double(d);
  double var = 0.0;
  for (double v : pre) var += (v - mean) * (v - mean);
  var /= double(d);
  for (std::size_t j = 0; j < d; ++j) {
    const double xhat = (pre[j] - mean) / std::sqrt(var + 1e-5);
    const double expect = fx.params.gamma->value[j] * xhat + fx.params.beta->value[j];
    CHECK(std::abs(got[j] - expect) <= 1e-12);
  }
}

TEST_CASE("embed_instructional: id range errors and pre-affine normalization") {
  Rng rng(4);
  EmbedderFixture fx(6, 16, rng);
  Graph g;
  CHECK_THROWS_AS(embed_instructional(g, fx.params, 4, 0), std::out_of_range);
  CHECK_THROWS_AS(embed_instructional(g, fx.params, -1, 0), std::out_of_range);
  CHECK_THROWS_AS(embed_instructional(g, fx.params, 0, 11), std::out_of_range);

  // gamma = 1, beta = 0 exposes the normalized vector.
  const Tensor& h = g.value(embed_instructional(g, fx.params, 1, 2));
  double mean = 0.0;
  for (std::size_t i = 0; i < h.size(); ++i) mean += h[i];
  mean /= double(h.size());
  CHECK(std::abs(mean) < 1e-9);
}

TEST_CASE("embedding rows differentiate: changing subject changes h_d") {
  Rng rng(5);
  EmbedderFixture fx(6, 12, rng);
  Graph g1, g2;
  const Tensor a = g1.value(embed_instructional(g1, fx.params, 1, 3));
  const Tensor b = g2.value(embed_instructional(g2, fx.params, 1, 4));
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) differs = differs || a[i] != b[i];
  CHECK(differs);
}

TEST_CASE("gradients flow into both embedding tables") {
  Rng rng(6);
  EmbedderFixture fx(5, 9, rng);
  auto build = [&](Graph& g) {
    Var h = embed_instructional(g, fx.params, 2, 6);
    Tensor w({1, 9});
    for (std::size_t i = 0; i < 9; ++i) w[i] = 0.3 + 0.1 * double(i);
    return g.weighted_sum(h, std::move(w));
  };
  const GradCheckReport rep = grad_check(fx.store, build, 1e-5, 1e-4);
  CHECK(rep.pass);
  Graph g;
  Var root = build(g);
  g.backward(root);
  const Tensor* gs = g.grad_for(*fx.params.e_stage);
  const Tensor* gu = g.grad_for(*fx.params.e_subject);
  REQUIRE(gs != nullptr);
  REQUIRE(gu != nullptr);
  double stage_mass = 0.0, subject_mass = 0.0;
  for (std::size_t j = 0; j < 5; ++j) {
    stage_mass += std::abs(gs->at(2, j));
    subject_mass += std::abs(gu->at(6, j));
  }
  CHECK(stage_mass > 0.0);
  CHECK(subject_mass > 0.0);
  // Untouched rows receive nothing.
  for (std::size_t j = 0; j < 5; ++j) CHECK(gs->at(0, j) == 0.0);
}

TEST_CASE("project_sequence: pass-through and affine projection") {
  Rng rng(7);
  const Tensor seq = random_tensor({5, 16}, rng);
  Graph g;
  Var in = g.input(seq);
  Var same = project_sequence(g, in, nullptr, 16);
  CHECK(same.id == in.id);  // strict mode with matching widths is the identity
  CHECK_THROWS(project_sequence(g, in, nullptr, 32));

  ParamStore store;
  ProjectionParams proj;
  proj.w = &store.add("w", random_tensor({16, 32}, rng, 0.3));
  proj.b = &store.add("b", Tensor({32}));
  Var projected = project_sequence(g, in, &proj, 32);
  CHECK(g.value(projected).shape() == std::vector<std::size_t>{5, 32});

  auto build = [&](Graph& gg) {
    Var x = gg.input(seq);
    Var y = project_sequence(gg, x, &proj, 32);
    Tensor w({5, 32});
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = 0.01 * double(i % 13) - 0.05;
    return gg.weighted_sum(y, std::move(w));
  };
  CHECK(grad_check(store, build, 1e-5, 1e-4).pass);
}

TEST_CASE("prepend_cls: zero-length guard, placement, round trip") {
  // A zero-length sequence is unrepresentable by construction.
  CHECK_THROWS(Tensor({0, 4}));

  Rng rng(8);
  const Tensor seq = random_tensor({2, 4}, rng);
  const Tensor cls = random_tensor({1, 4}, rng);
  Graph g;
  Var out = prepend_cls(g, g.input(seq), g.input(cls));
  REQUIRE(g.value(out).shape() == std::vector<std::size_t>{3, 4});
  for (std::size_t j = 0; j < 4; ++j) {
    CHECK(g.value(out).at(0, j) == cls[j]);
    CHECK(g.value(out).at(1, j) == seq.at(0, j));
    CHECK(g.value(out).at(2, j) == seq.at(1, j));
  }
  Var back = g.slice_rows(out, 1, 3);
  for (std::size_t i = 0; i < seq.size(); ++i) CHECK(g.value(back)[i] == seq[i]);

  CHECK_THROWS(prepend_cls(g, g.input(seq), g.input(random_tensor({1, 5}, rng))));
  CHECK_THROWS(prepend_cls(g, g.input(seq), g.input(random_tensor({2, 4}, rng))));
}

TEST_CASE("instructional_sequence: exactly [cls ; h_d]") {
  Rng rng(9);
  const Tensor h_d = random_tensor({1, 6}, rng);
  const Tensor cls = random_tensor({1, 6}, rng);
  Graph g;
  Var seq = instructional_sequence(g, g.input(h_d), g.input(cls));
  REQUIRE(g.value(seq).shape() == std::vector<std::size_t>{2, 6});
  for (std::size_t j = 0; j < 6; ++j) {
    CHECK(g.value(seq).at(0, j) == cls[j]);
    CHECK(g.value(seq).at(1, j) == h_d[j]);
  }
  CHECK_THROWS(instructional_sequence(g, g.input(random_tensor({2, 6}, rng)), g.input(cls)));
}

TEST_CASE("feature bundle loader validates structure") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "tsa_feature_tests";
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "ok.json");
    out << R"({"text":[[1,2],[3,4]],"audio":[[5,6]],"video_desc":[[7,8]],)"
        << R"("video_raw":[[9,10]],"stage_id":1,"subject_id":2,"label":"patience"})";
  }
  const FeatureBundle b = load_feature_bundle(dir / "ok.json");
  CHECK(b.text.shape() == std::vector<std::size_t>{2, 2});
  CHECK(b.audio.at(0, 1) == 6.0);
  CHECK(b.label == EmotionLabel::patience);
  CHECK(b.stage_id == 1);
  CHECK(b.name == "ok");
  {
    std::ofstream out(dir / "ragged.json");
    out << R"({"text":[[1,2],[3]],"audio":[[5,6]],"video_desc":[[7,8]],)"
        << R"("video_raw":[[9,10]],"stage_id":1,"subject_id":2,"label":"joy"})";
  }
  CHECK_THROWS(load_feature_bundle(dir / "ragged.json"));
  {
    std::ofstream out(dir / "mixed_dim.json");
    out << R"({"text":[[1,2]],"audio":[[5,6,7]],"video_desc":[[7,8]],)"
        << R"("video_raw":[[9,10]],"stage_id":1,"subject_id":2,"label":"joy"})";
  }
  CHECK_THROWS(load_feature_bundle(dir / "mixed_dim.json"));
  fs::remove_all(dir);
}
