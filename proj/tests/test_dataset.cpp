#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "tsa/dataset.hpp"
#include "tsa/experiment.hpp"

using namespace tsa;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& leaf) {
  const fs::path dir = fs::temp_directory_path() / "tsa_dataset_tests" / leaf;
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

SampleRecord basic_record(const std::string& name, EmotionLabel label = EmotionLabel::joy) {
  SampleRecord r;
  r.level = "high_school";
  r.name = name;
  r.source = "classroom_001";
  r.start_time = 10.0;
  r.end_time = 15.0;
  r.duration = 5.0;
  r.text = "hello";
  r.label = label;
  r.stage_id = 1;
  r.subject_id = 2;
  return r;
}

}  // namespace

TEST_CASE("labels: bijection, round trip, bad token") {
  CHECK(static_cast<int>(EmotionLabel::neutral) == 0);
  CHECK(static_cast<int>(EmotionLabel::anger) == 1);
  CHECK(static_cast<int>(EmotionLabel::joy) == 2);
  CHECK(static_cast<int>(EmotionLabel::surprise) == 3);
  CHECK(static_cast<int>(EmotionLabel::sadness) == 4);
  CHECK(static_cast<int>(EmotionLabel::patience) == 5);
  CHECK(static_cast<int>(EmotionLabel::enthusiasm) == 6);
  CHECK(static_cast<int>(EmotionLabel::expectation) == 7);
  for (int c = 0; c < 8; ++c) {
    const auto l = static_cast<EmotionLabel>(c);
    CHECK(parse_label(to_string(l)) == l);
  }
  CHECK_THROWS_WITH_AS(parse_label("angerr"), doctest::Contains("angerr"),
                       std::invalid_argument);
}

TEST_CASE("manifest: load single line, invariant violations carry context") {
  const fs::path dir = scratch_dir("manifest");
  {
    Manifest m;
    m.records.push_back(basic_record("clip_a"));
    save_manifest(m, dir / "ok.jsonl");
    const Manifest load = load_manifest(dir / "ok.jsonl");
    CHECK(load.size() == 1);
    CHECK(load.records[0].name == "clip_a");
    CHECK(load.records[0].label == EmotionLabel::joy);
  }
  {
    std::ofstream out(dir / "bad_time.jsonl");
    out << R"({"level":"l","name":"clip_b","source":"s","start_time":9.0,"end_time":4.0,)"
        << R"("duration":5.0,"text":"t","label":"joy","stage_id":0,"subject_id":0})" << "\n";
    out.close();
    CHECK_THROWS_WITH_AS(load_manifest(dir / "bad_time.jsonl"), doctest::Contains("end_time"),
                         std::runtime_error);
  }
  {
    std::ofstream out(dir / "bad_label.jsonl");
    out << R"({"level":"l","name":"clip_c","source":"s","start_time":1.0,"end_time":4.0,)"
        << R"("duration":3.0,"text":"t","label":"angerr","stage_id":0,"subject_id":0})" << "\n";
    out.close();
    CHECK_THROWS_WITH_AS(load_manifest(dir / "bad_label.jsonl"), doctest::Contains("angerr"),
                         std::runtime_error);
  }
  {
    Manifest m;
    m.records.push_back(basic_record("dup"));
    m.records.push_back(basic_record("dup"));
    save_manifest(m, dir / "dup.jsonl");
    CHECK_THROWS_WITH_AS(load_manifest(dir / "dup.jsonl"), doctest::Contains("duplicate"),
                         std::runtime_error);
  }
  {
    std::ofstream out(dir / "garbled.jsonl");
    out << "{\"level\":\n";
    out.close();
    CHECK_THROWS_WITH_AS(load_manifest(dir / "garbled.jsonl"), doctest::Contains("line 1"),
                         std::runtime_error);
  }
  {
    // Duration may disagree with end - start by at most 0.05 s.
    SampleRecord r = basic_record("drift");
    r.duration = 5.2;
    CHECK_THROWS_WITH_AS(validate_record(r), doctest::Contains("duration"),
                         std::invalid_argument);
    r.duration = 5.04;
    CHECK_NOTHROW(validate_record(r));
  }
}

TEST_CASE("manifest write/load round trip is field-identical") {
  const fs::path dir = scratch_dir("roundtrip");
  Manifest m;
  for (int i = 0; i < 20; ++i) {
    SampleRecord r = basic_record("clip_" + std::to_string(i),
                                  static_cast<EmotionLabel>(i % 8));
    r.start_time = 3.25 * i;
    r.end_time = r.start_time + 4.5;
    r.duration = 4.5;
    r.text = "utterance " + std::to_string(i);
    m.records.push_back(r);
  }
  save_manifest(m, dir / "m.jsonl");
  const Manifest back = load_manifest(dir / "m.jsonl");
  REQUIRE(back.size() == m.size());
  for (std::size_t i = 0; i < m.size(); ++i) {
    CHECK(back.records[i].level == m.records[i].level);
    CHECK(back.records[i].name == m.records[i].name);
    CHECK(back.records[i].source == m.records[i].source);
    CHECK(back.records[i].start_time == m.records[i].start_time);
    CHECK(back.records[i].end_time == m.records[i].end_time);
    CHECK(back.records[i].duration == m.records[i].duration);
    CHECK(back.records[i].text == m.records[i].text);
    CHECK(back.records[i].label == m.records[i].label);
    CHECK(back.records[i].stage_id == m.records[i].stage_id);
    CHECK(back.records[i].subject_id == m.records[i].subject_id);
  }
}

namespace {

Manifest manifest_of(std::size_t n) {
  Manifest m;
  for (std::size_t i = 0; i < n; ++i) {
    m.records.push_back(basic_record("r" + std::to_string(i),
                                     static_cast<EmotionLabel>(i % 8)));
  }
  return m;
}

}  // namespace

TEST_CASE("split: sizes, determinism, disjoint-exhaustive property") {
  {
    const SplitSpec s = split(manifest_of(10), {0.8, 0.1, 0.1}, 0);
    CHECK(s.train.size() == 8);
    CHECK(s.val.size() == 1);
    CHECK(s.test.size() == 1);
  }
  {
    // floor(n*r) per bucket, remainder to train: floors are 11950/1493/1493,
    // so train picks up the 2 leftovers.
    const SplitSpec s = split(manifest_of(14938), {0.8, 0.1, 0.1}, 0);
    CHECK(s.train.size() == 11952);
    CHECK(s.val.size() == 1493);
    CHECK(s.test.size() == 1493);
  }
  {
    const SplitSpec a = split(manifest_of(100), {0.8, 0.1, 0.1}, 42);
    const SplitSpec b = split(manifest_of(100), {0.8, 0.1, 0.1}, 42);
    CHECK(a.train == b.train);
    CHECK(a.val == b.val);
    CHECK(a.test == b.test);
    const SplitSpec c = split(manifest_of(100), {0.8, 0.1, 0.1}, 43);
    CHECK(a.train != c.train);
  }
  CHECK_THROWS(split(manifest_of(0), {0.8, 0.1, 0.1}, 0));
  CHECK_THROWS(split(manifest_of(10), {0.8, 0.3, 0.1}, 0));

  for (std::size_t n = 1; n <= 200; ++n) {
    const SplitSpec s = split(manifest_of(n), {0.8, 0.1, 0.1}, n);
    std::set<std::size_t> seen;
    for (auto i : s.train) seen.insert(i);
    for (auto i : s.val) seen.insert(i);
    for (auto i : s.test) seen.insert(i);
    CHECK(seen.size() == n);
    CHECK(s.train.size() + s.val.size() + s.test.size() == n);
    CHECK(*seen.rbegin() == n - 1);
  }
  // Stratified mode keeps the same disjoint-exhaustive contract.
  for (std::size_t n : {8ul, 57ul, 160ul}) {
    const SplitSpec s = split(manifest_of(n), {0.8, 0.1, 0.1}, 3, true);
    std::set<std::size_t> seen;
    for (auto i : s.train) seen.insert(i);
    for (auto i : s.val) seen.insert(i);
    for (auto i : s.test) seen.insert(i);
    CHECK(seen.size() == n);
  }
}

TEST_CASE("kfold: sizes, union, property over n and k") {
  {
    const Folds f = kfold(manifest_of(10), 5, 0);
    REQUIRE(f.folds.size() == 5);
    for (const auto& fold : f.folds) CHECK(fold.size() == 2);
  }
  {
    const Folds f = kfold(manifest_of(11), 5, 1);
    std::multiset<std::size_t> sizes;
    for (const auto& fold : f.folds) sizes.insert(fold.size());
    CHECK(sizes == std::multiset<std::size_t>{3, 2, 2, 2, 2});
  }
  CHECK_THROWS(kfold(manifest_of(10), 1, 0));
  CHECK_THROWS(kfold(manifest_of(3), 5, 0));

  for (std::size_t n = 2; n <= 200; n += 7) {
    for (int k = 2; k <= 6 && static_cast<std::size_t>(k) <= n; ++k) {
      const Folds f = kfold(manifest_of(n), k, n + k);
      std::set<std::size_t> seen;
      std::size_t total = 0, mx = 0, mn = n;
      for (const auto& fold : f.folds) {
        total += fold.size();
        mx = std::max(mx, fold.size());
        mn = std::min(mn, fold.size());
        for (auto i : fold) seen.insert(i);
      }
      CHECK(total == n);
      CHECK(seen.size() == n);
      CHECK(mx - mn <= 1);
    }
  }
}

TEST_CASE("consensus vote: spec cases and exhaustive predicate") {
  auto sheet = [](EmotionLabel proposed, std::vector<EmotionLabel> experts) {
    VoteSheet s;
    s.proposed = proposed;
    s.expert_labels = std::move(experts);
    return s;
  };
  using L = EmotionLabel;
  CHECK(consensus_vote(sheet(L::joy, {L::joy, L::joy, L::joy, L::joy, L::joy})).accepted);
  CHECK(consensus_vote(sheet(L::joy, {L::joy, L::joy, L::joy, L::joy, L::neutral})).accepted);
  CHECK_FALSE(
      consensus_vote(sheet(L::joy, {L::joy, L::joy, L::joy, L::neutral, L::neutral})).accepted);
  CHECK(consensus_vote(sheet(L::joy, {L::joy, L::joy, L::joy, L::joy, L::joy})).label == L::joy);
  CHECK_THROWS(consensus_vote(sheet(L::joy, {L::joy, L::joy})));

  // All 8^6 (proposed x 5 experts) combinations against the >=4 predicate.
  std::size_t cases = 0;
  for (int p = 0; p < 8; ++p) {
    for (int e0 = 0; e0 < 8; ++e0)
      for (int e1 = 0; e1 < 8; ++e1)
        for (int e2 = 0; e2 < 8; ++e2)
          for (int e3 = 0; e3 < 8; ++e3)
            for (int e4 = 0; e4 < 8; ++e4) {
              const int votes = (e0 == p) + (e1 == p) + (e2 == p) + (e3 == p) + (e4 == p);
              VoteSheet s;
              s.proposed = static_cast<L>(p);
              s.expert_labels = {static_cast<L>(e0), static_cast<L>(e1), static_cast<L>(e2),
                                 static_cast<L>(e3), static_cast<L>(e4)};
              if (consensus_vote(s).accepted != (votes >= 4)) {
                REQUIRE(false);
              }
              ++cases;
            }
  }
  CHECK(cases == 262144);
}

TEST_CASE("class distribution and quota apportionment") {
  {
    Manifest m;
    for (int c = 0; c < 8; ++c) {
      for (std::size_t i = 0; i < kReferenceCounts[c]; ++i) {
        m.records.push_back(basic_record("q" + std::to_string(c) + "_" + std::to_string(i),
                                         static_cast<EmotionLabel>(c)));
      }
    }
    const ClassDistribution d = class_distribution(m);
    CHECK(d.total == 14938);
    CHECK(d.counts[0] == 7318);
    CHECK(d.counts[1] == 821);
    CHECK(d.counts[2] == 1619);
    CHECK(d.counts[3] == 507);
    CHECK(d.counts[4] == 430);
    CHECK(d.counts[5] == 916);
    CHECK(d.counts[6] == 834);
    CHECK(d.counts[7] == 2493);
    double sum = 0;
    for (double p : d.proportions) sum += p;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
  {
    const ClassDistribution d = class_distribution(manifest_of(1));
    CHECK(d.counts[0] == 1);
    CHECK(d.total == 1);
  }
  {
    const auto q = apportion_quotas(14938);
    CHECK(q == std::array<std::size_t, 8>{7318, 821, 1619, 507, 430, 916, 834, 2493});
  }
  for (std::size_t n : {1ul, 7ul, 100ul, 2000ul, 14937ul, 14939ul, 50000ul}) {
    const auto q = apportion_quotas(n);
    std::size_t total = 0;
    for (int c = 0; c < 8; ++c) {
      total += q[c];
      const double ideal =
          double(n) * double(kReferenceCounts[c]) / double(kReferenceTotal);
      CHECK(std::abs(double(q[c]) - ideal) < 1.0);
    }
    CHECK(total == n);
  }
}

TEST_CASE("synthesize: quotas, determinism, dim guard") {
  SynthConfig cfg;
  cfg.n_samples = 160;
  cfg.dim = 8;
  cfg.seed = 9;
  const fs::path a = scratch_dir("synth_a");
  const fs::path b = scratch_dir("synth_b");
  const Manifest ma = synthesize(cfg, a);
  const Manifest mb = synthesize(cfg, b);
  CHECK(ma.size() == 160);
  const ClassDistribution d = class_distribution(ma);
  const auto q = apportion_quotas(160);
  for (int c = 0; c < 8; ++c) CHECK(d.counts[c] == q[c]);

  CHECK(slurp(a / "manifest.jsonl") == slurp(b / "manifest.jsonl"));
  for (const auto& rec : ma.records) {
    CHECK(slurp(a / "features" / (rec.name + ".json")) ==
          slurp(b / "features" / (rec.name + ".json")));
  }
  CHECK(fs::exists(a / "vocab.json"));

  SynthConfig small = cfg;
  small.dim = 7;
  CHECK_THROWS_WITH_AS(synthesize(small, a), doctest::Contains("dim"), std::invalid_argument);

  // A different seed must actually change the data.
  SynthConfig other = cfg;
  other.seed = 10;
  const fs::path c = scratch_dir("synth_c");
  synthesize(other, c);
  CHECK(slurp(a / "manifest.jsonl") != slurp(c / "manifest.jsonl"));
  fs::remove_all(a.parent_path());
}

TEST_CASE("synthesize: centroid probe accuracy orders the modalities") {
  SynthConfig cfg;
  cfg.n_samples = 2000;
  cfg.seed = 0;
  const fs::path dir = scratch_dir("synth_probe");
  const Manifest m = synthesize(cfg, dir);
  const auto bundles = load_bundles(dir, m);

  // Nearest-centroid oracle on mean-pooled tokens.
  auto probe = [&](auto pick) {
    std::vector<std::vector<double>> centroid(8, std::vector<double>(cfg.dim, 0.0));
    std::vector<std::size_t> count(8, 0);
    auto pooled = [&](const FeatureBundle& b) {
      const Tensor& f = pick(b);
      std::vector<double> mean(cfg.dim, 0.0);
      for (std::size_t t = 0; t < f.extent(0); ++t) {
        for (std::size_t j = 0; j < cfg.dim; ++j) mean[j] += f.at(t, j);
      }
      for (double& v : mean) v /= double(f.extent(0));
      return mean;
    };
    for (const auto& b : bundles) {
      const auto mean = pooled(b);
      const auto c = static_cast<std::size_t>(b.label);
      for (std::size_t j = 0; j < cfg.dim; ++j) centroid[c][j] += mean[j];
      ++count[c];
    }
    for (int c = 0; c < 8; ++c) {
      for (auto& v : centroid[c]) v /= double(count[c]);
    }
    std::size_t hits = 0;
    for (const auto& b : bundles) {
      const auto mean = pooled(b);
      int best = 0;
      double best_d = 1e300;
      for (int c = 0; c < 8; ++c) {
        double dist = 0;
        for (std::size_t j = 0; j < cfg.dim; ++j) {
          dist += (mean[j] - centroid[c][j]) * (mean[j] - centroid[c][j]);
        }
        if (dist < best_d) {
          best_d = dist;
          best = c;
        }
      }
      if (best == static_cast<int>(b.label)) ++hits;
    }
    return double(hits) / double(bundles.size());
  };

  const double acc_audio = probe([](const FeatureBundle& b) -> const Tensor& { return b.audio; });
  const double acc_text = probe([](const FeatureBundle& b) -> const Tensor& { return b.text; });
  const double acc_vd =
      probe([](const FeatureBundle& b) -> const Tensor& { return b.video_desc; });
  const double acc_vr =
      probe([](const FeatureBundle& b) -> const Tensor& { return b.video_raw; });
  CAPTURE(acc_audio);
  CAPTURE(acc_text);
  CAPTURE(acc_vd);
  CAPTURE(acc_vr);
  CHECK(acc_audio > acc_text);
  CHECK(acc_text > acc_vd);
  CHECK(acc_vd > acc_vr);
  fs::remove_all(dir.parent_path());
}

TEST_CASE("expert agent: boundary accuracies and Monte Carlo agreement") {
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    CHECK(expert_agent(EmotionLabel::patience, 1.0, rng) == EmotionLabel::patience);
    CHECK(expert_agent(EmotionLabel::patience, 0.0, rng) != EmotionLabel::patience);
  }
  const double q = 0.8;
  std::size_t agree = 0;
  const std::size_t draws = 100000;
  for (std::size_t i = 0; i < draws; ++i) {
    if (expert_agent(EmotionLabel::joy, q, rng) == EmotionLabel::joy) ++agree;
  }
  CHECK(std::abs(double(agree) / double(draws) - q) < 0.01);
  CHECK_THROWS(expert_agent(EmotionLabel::joy, 1.5, rng));
}

namespace {

// Truth-aware stochastic labeler with adjustable accuracy; fine-tuning bumps
// the accuracy to simulate adaptation on the corrected pilot.
struct FakeLabeler {
  const Manifest* manifest;
  double accuracy;
  double tuned_accuracy;
  Rng rng{991};
  AnnotationLabeler hooks;

  explicit FakeLabeler(const Manifest& m, double acc, double tuned)
      : manifest(&m), accuracy(acc), tuned_accuracy(tuned) {
    hooks.predict = [this](std::size_t i) {
      return expert_agent(manifest->records[i].label, accuracy, rng);
    };
    hooks.fine_tune = [this](const std::vector<std::size_t>&,
                             const std::vector<EmotionLabel>&) { accuracy = tuned_accuracy; };
  }
};

}  // namespace

TEST_CASE("annotation pipeline: perfect experts reduce the vote to a truth check") {
  const Manifest m = manifest_of(400);
  FakeLabeler labeler(m, 0.6, 0.7);
  Rng rng(5);
  const PipelineReport rep = simulate_annotation_pipeline(m, labeler.hooks, 1.0, 0.10, rng);
  CHECK(rep.pilot_size == 40);
  CHECK(rep.auto_labeled == 360);
  CHECK(rep.accepted + rep.discarded == rep.auto_labeled);
  // With q = 1 every expert echoes the truth, so acceptance == correctness.
  CHECK(rep.accepted_accuracy == doctest::Approx(1.0));
  CHECK(rep.retention == doctest::Approx(rep.prevote_accuracy));
}

TEST_CASE("annotation pipeline: imperfect experts still raise precision") {
  Manifest m;
  for (std::size_t i = 0; i < 2000; ++i) {
    m.records.push_back(basic_record("p" + std::to_string(i),
                                     static_cast<EmotionLabel>(i % 8)));
  }
  FakeLabeler labeler(m, 0.55, 0.70);
  Rng rng(7);
  const PipelineReport rep = simulate_annotation_pipeline(m, labeler.hooks, 0.9, 0.10, rng);
  CHECK(rep.pilot_size == 200);
  CHECK(rep.auto_labeled == 1800);
  CHECK(rep.accepted + rep.discarded == rep.auto_labeled);
  CHECK(rep.prevote_accuracy == doctest::Approx(0.70).epsilon(0.05));
  CHECK(rep.accepted_accuracy > rep.prevote_accuracy);
  CHECK(rep.corrected > 0);
}

TEST_CASE("annotation pipeline rejects an empty pilot") {
  const Manifest m = manifest_of(5);
  FakeLabeler labeler(m, 0.5, 0.5);
  Rng rng(1);
  CHECK_THROWS_WITH_AS(simulate_annotation_pipeline(m, labeler.hooks, 1.0, 0.0, rng),
                       doctest::Contains("pilot"), std::invalid_argument);
}
