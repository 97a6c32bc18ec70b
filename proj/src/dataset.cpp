#include "tsa/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "tsa/tensor.hpp"

namespace tsa {

namespace {

using nlohmann::json;

constexpr std::array<const char*, 8> kLabelNames = {"neutral",  "anger",      "joy",
                                                    "surprise", "sadness",    "patience",
                                                    "enthusiasm", "expectation"};

// The teacher-specific labels read faintly in speech, transcript and raw
// pixels; their identity is carried by the instructional ids and by the
// described body language. Keeps those modalities informative instead of
// redundant.
constexpr double kTeacherClassAttenuation = 0.55;
constexpr bool is_teacher_class(int c) { return c >= 5; }

// Preferred (stage, subject) pair per teacher-specific label.
constexpr std::array<std::pair<int, int>, 8> kPreferredIds = {{{-1, -1},
                                                               {-1, -1},
                                                               {-1, -1},
                                                               {-1, -1},
                                                               {-1, -1},
                                                               {1, 3},
                                                               {2, 7},
                                                               {3, 10}}};

}  // namespace

const char* to_string(EmotionLabel label) {
  return kLabelNames[static_cast<std::size_t>(label)];
}

EmotionLabel parse_label(const std::string& token) {
  for (std::size_t i = 0; i < kLabelNames.size(); ++i) {
    if (token == kLabelNames[i]) return static_cast<EmotionLabel>(i);
  }
  throw std::invalid_argument("unknown emotion label \"" + token + "\"");
}

void validate_record(const SampleRecord& rec) {
  if (rec.name.empty()) throw std::invalid_argument("record field 'name' is empty");
  if (!(rec.end_time > rec.start_time)) {
    throw std::invalid_argument("record '" + rec.name + "': field 'end_time' (" +
                                std::to_string(rec.end_time) + ") must exceed 'start_time' (" +
                                std::to_string(rec.start_time) + ")");
  }
  if (rec.start_time < 0.0) {
    throw std::invalid_argument("record '" + rec.name + "': field 'start_time' is negative");
  }
  if (std::abs(rec.duration - (rec.end_time - rec.start_time)) > 0.05) {
    throw std::invalid_argument("record '" + rec.name +
                                "': field 'duration' disagrees with end_time - start_time by "
                                "more than 0.05 s");
  }
  if (rec.stage_id < 0 || rec.subject_id < 0) {
    throw std::invalid_argument("record '" + rec.name + "': field 'stage_id'/'subject_id' negative");
  }
}

Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest: " + path.string());
  Manifest manifest;
  manifest.provenance = path.string();
  std::unordered_set<std::string> names;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw std::runtime_error("manifest parse error at line " + std::to_string(line_no) + ": " +
                               e.what());
    }
    SampleRecord rec;
    try {
      rec.level = j.at("level").get<std::string>();
      rec.name = j.at("name").get<std::string>();
      rec.source = j.at("source").get<std::string>();
      rec.start_time = j.at("start_time").get<double>();
      rec.end_time = j.at("end_time").get<double>();
      rec.duration = j.at("duration").get<double>();
      rec.text = j.at("text").get<std::string>();
      rec.label = parse_label(j.at("label").get<std::string>());
      rec.stage_id = j.at("stage_id").get<int>();
      rec.subject_id = j.at("subject_id").get<int>();
      validate_record(rec);
    } catch (const std::exception& e) {
      throw std::runtime_error("manifest line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!names.insert(rec.name).second) {
      throw std::runtime_error("manifest line " + std::to_string(line_no) + ": duplicate name '" +
                               rec.name + "'");
    }
    manifest.records.push_back(std::move(rec));
  }
  return manifest;
}

void save_manifest(const Manifest& manifest, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write manifest: " + path.string());
  for (const SampleRecord& rec : manifest.records) {
    json j;
    j["level"] = rec.level;
    j["name"] = rec.name;
    j["source"] = rec.source;
    j["start_time"] = rec.start_time;
    j["end_time"] = rec.end_time;
    j["duration"] = rec.duration;
    j["text"] = rec.text;
    j["label"] = to_string(rec.label);
    j["stage_id"] = rec.stage_id;
    j["subject_id"] = rec.subject_id;
    out << j.dump() << '\n';
  }
}

namespace {

std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(idx);
  return idx;
}

// floor(n * ratio) per bucket, leftover to train (bucket 0).
std::array<std::size_t, 3> split_sizes(std::size_t n, const std::array<double, 3>& ratios) {
  std::array<std::size_t, 3> sizes{};
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    sizes[i] = static_cast<std::size_t>(std::floor(static_cast<double>(n) * ratios[i]));
    assigned += sizes[i];
  }
  sizes[0] += n - assigned;
  return sizes;
}

}  // namespace

SplitSpec split(const Manifest& manifest, std::array<double, 3> ratios, std::uint64_t seed,
                bool stratified) {
  if (manifest.records.empty()) throw std::invalid_argument("split: empty manifest");
  const double sum = ratios[0] + ratios[1] + ratios[2];
  if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("split: ratios must sum to 1");

  SplitSpec spec;
  auto assign = [&](const std::vector<std::size_t>& pool) {
    const auto sizes = split_sizes(pool.size(), ratios);
    spec.train.insert(spec.train.end(), pool.begin(), pool.begin() + sizes[0]);
    spec.val.insert(spec.val.end(), pool.begin() + sizes[0], pool.begin() + sizes[0] + sizes[1]);
    spec.test.insert(spec.test.end(), pool.begin() + sizes[0] + sizes[1], pool.end());
  };

  if (!stratified) {
    assign(shuffled_indices(manifest.size(), seed));
    return spec;
  }
  const auto order = shuffled_indices(manifest.size(), seed);
  for (int c = 0; c < 8; ++c) {
    std::vector<std::size_t> pool;
    for (std::size_t i : order) {
      if (static_cast<int>(manifest.records[i].label) == c) pool.push_back(i);
    }
    if (!pool.empty()) assign(pool);
  }
  return spec;
}

Folds kfold(const Manifest& manifest, int k, std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("kfold: k must be at least 2");
  const std::size_t n = manifest.size();
  if (n < static_cast<std::size_t>(k)) throw std::invalid_argument("kfold: fewer samples than folds");
  const auto order = shuffled_indices(n, seed);
  Folds folds;
  folds.folds.resize(static_cast<std::size_t>(k));
  const std::size_t base = n / static_cast<std::size_t>(k);
  const std::size_t extra = n % static_cast<std::size_t>(k);
  std::size_t pos = 0;
  for (std::size_t f = 0; f < static_cast<std::size_t>(k); ++f) {
    const std::size_t len = base + (f < extra ? 1 : 0);
    folds.folds[f].assign(order.begin() + pos, order.begin() + pos + len);
    pos += len;
  }
  return folds;
}

VoteOutcome consensus_vote(const VoteSheet& sheet) {
  if (sheet.expert_labels.size() != 5) {
    throw std::invalid_argument("consensus_vote: expected exactly 5 expert labels, got " +
                                std::to_string(sheet.expert_labels.size()));
  }
  int agree = 0;
  for (EmotionLabel l : sheet.expert_labels) {
    if (l == sheet.proposed) ++agree;
  }
  if (agree >= 4) return VoteOutcome{true, sheet.proposed};
  return VoteOutcome{false, sheet.proposed};
}

ClassDistribution class_distribution(const Manifest& manifest) {
  ClassDistribution dist;
  dist.total = manifest.size();
  for (const auto& rec : manifest.records) {
    ++dist.counts[static_cast<std::size_t>(rec.label)];
  }
  if (dist.total > 0) {
    for (std::size_t c = 0; c < 8; ++c) {
      dist.proportions[c] = static_cast<double>(dist.counts[c]) / static_cast<double>(dist.total);
    }
  }
  return dist;
}

std::array<std::size_t, 8> apportion_quotas(std::size_t n) {
  std::array<std::size_t, 8> quotas{};
  std::array<std::pair<std::size_t, std::size_t>, 8> remainders{};  // (remainder, class)
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < 8; ++c) {
    const std::size_t num = n * kReferenceCounts[c];
    quotas[c] = num / kReferenceTotal;
    remainders[c] = {num % kReferenceTotal, c};
    assigned += quotas[c];
  }
  std::stable_sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  for (std::size_t i = 0; i < n - assigned; ++i) ++quotas[remainders[i].second];
  return quotas;
}

const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names = {"primary", "middle_school", "high_school",
                                                 "higher_education"};
  return names;
}

const std::vector<std::string>& subject_names() {
  static const std::vector<std::string> names = {"mathematics", "physics",   "chemistry",
                                                 "biology",     "language",  "literature",
                                                 "history",     "geography", "art",
                                                 "music",       "computer_science"};
  return names;
}

namespace {

// Orthonormal class directions per modality, fixed independently of the user
// seed so the class geometry is stable across datasets. When
// attenuate_teacher is set, the teacher-specific class directions shrink by
// kTeacherClassAttenuation.
std::vector<std::vector<double>> class_directions(std::size_t dim, std::uint64_t stream,
                                                  bool attenuate_teacher) {
  Rng rng(0x7a3d5eb1ull * (stream + 1) + 17ull);
  std::vector<std::vector<double>> dirs(8, std::vector<double>(dim, 0.0));
  for (auto& d : dirs) {
    for (double& v : d) v = rng.normal();
  }
  // Gram-Schmidt; dim >= 8 guarantees full rank in practice.
  for (std::size_t c = 0; c < 8; ++c) {
    for (std::size_t p = 0; p < c; ++p) {
      double dot = 0.0;
      for (std::size_t j = 0; j < dim; ++j) dot += dirs[c][j] * dirs[p][j];
      for (std::size_t j = 0; j < dim; ++j) dirs[c][j] -= dot * dirs[p][j];
    }
    double norm = 0.0;
    for (std::size_t j = 0; j < dim; ++j) norm += dirs[c][j] * dirs[c][j];
    norm = std::sqrt(norm);
    if (norm < 1e-9) throw std::runtime_error("class_directions: degenerate basis");
    for (std::size_t j = 0; j < dim; ++j) dirs[c][j] /= norm;
    if (attenuate_teacher && is_teacher_class(static_cast<int>(c))) {
      for (std::size_t j = 0; j < dim; ++j) dirs[c][j] *= kTeacherClassAttenuation;
    }
  }
  return dirs;
}

json feature_matrix(std::size_t tokens, std::size_t dim, const std::vector<double>& dir,
                    double scale, double sigma, Rng& rng) {
  json rows = json::array();
  for (std::size_t t = 0; t < tokens; ++t) {
    json row = json::array();
    for (std::size_t j = 0; j < dim; ++j) {
      row.push_back(dir[j] * scale + sigma * rng.normal());
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

Manifest synthesize(const SynthConfig& cfg, const std::filesystem::path& out_dir) {
  if (cfg.dim < 8) {
    throw std::invalid_argument(
        "synthesize: feature dim too small to host 8 class directions (requires dim >= 8)");
  }
  if (cfg.n_samples == 0) throw std::invalid_argument("synthesize: n_samples must be positive");
  if (cfg.text_len == 0 || cfg.audio_len == 0 || cfg.video_len == 0) {
    throw std::invalid_argument("synthesize: sequence lengths must be positive");
  }

  std::filesystem::create_directories(out_dir / "features");

  const auto quotas = apportion_quotas(cfg.n_samples);
  std::vector<int> labels;
  labels.reserve(cfg.n_samples);
  for (int c = 0; c < 8; ++c) {
    labels.insert(labels.end(), quotas[static_cast<std::size_t>(c)], c);
  }
  Rng rng(cfg.seed);
  rng.shuffle(labels);

  // Teacher-specific classes read faintly in speech, transcript and raw
  // pixels (performative restraint); described body language keeps them at
  // full strength. Description features are text-encoder outputs, so they
  // share the text basis; raw video lives in its own one.
  const auto dir_text = class_directions(cfg.dim, 0, true);
  const auto dir_audio = class_directions(cfg.dim, 1, true);
  const auto dir_vdesc = class_directions(cfg.dim, 0, false);
  const auto dir_vraw = class_directions(cfg.dim, 3, true);

  Manifest manifest;
  manifest.provenance = "synthetic(seed=" + std::to_string(cfg.seed) +
                        ", n=" + std::to_string(cfg.n_samples) + ")";
  manifest.records.reserve(cfg.n_samples);

  for (std::size_t i = 0; i < cfg.n_samples; ++i) {
    const int c = labels[i];
    SampleRecord rec;

    const auto [pref_stage, pref_subject] = kPreferredIds[static_cast<std::size_t>(c)];
    if (pref_stage >= 0 && rng.uniform() < cfg.instructional_prior) {
      rec.stage_id = pref_stage;
    } else {
      rec.stage_id = static_cast<int>(rng.below(cfg.n_stages));
    }
    if (pref_subject >= 0 && rng.uniform() < cfg.instructional_prior) {
      rec.subject_id = pref_subject;
    } else {
      rec.subject_id = static_cast<int>(rng.below(cfg.n_subjects));
    }

    char name[32];
    std::snprintf(name, sizeof(name), "tmed_%06zu", i);
    rec.name = name;
    rec.level = stage_names()[static_cast<std::size_t>(rec.stage_id) % stage_names().size()];
    char source[48];
    std::snprintf(source, sizeof(source), "synthetic/classroom_%03d",
                  static_cast<int>(rng.below(250)));
    rec.source = source;
    rec.start_time = static_cast<double>(i) * 12.0 + rng.uniform(0.0, 2.0);
    rec.end_time = rec.start_time + rng.uniform(2.0, 10.0);
    rec.duration = rec.end_time - rec.start_time;
    rec.text = "synthetic utterance " + std::string(name + 5);
    rec.label = static_cast<EmotionLabel>(c);

    json features;
    features["text"] = feature_matrix(cfg.text_len, cfg.dim, dir_text[static_cast<std::size_t>(c)],
                                      cfg.text_scale, cfg.noise_sigma, rng);
    features["audio"] = feature_matrix(cfg.audio_len, cfg.dim,
                                       dir_audio[static_cast<std::size_t>(c)], cfg.audio_scale,
                                       cfg.noise_sigma, rng);
    features["video_desc"] = feature_matrix(cfg.video_len, cfg.dim,
                                            dir_vdesc[static_cast<std::size_t>(c)],
                                            cfg.video_desc_scale, cfg.noise_sigma, rng);
    features["video_raw"] = feature_matrix(cfg.video_len, cfg.dim,
                                           dir_vraw[static_cast<std::size_t>(c)],
                                           cfg.video_raw_scale, cfg.noise_sigma, rng);
    features["stage_id"] = rec.stage_id;
    features["subject_id"] = rec.subject_id;
    features["label"] = to_string(rec.label);

    std::ofstream out(out_dir / "features" / (rec.name + ".json"));
    if (!out) throw std::runtime_error("synthesize: cannot write feature file for " + rec.name);
    out << features.dump() << '\n';

    manifest.records.push_back(std::move(rec));
  }

  save_manifest(manifest, out_dir / "manifest.jsonl");

  json vocab;
  vocab["stages"] = stage_names();
  vocab["subjects"] = subject_names();
  std::ofstream vout(out_dir / "vocab.json");
  vout << vocab.dump(2) << '\n';

  return manifest;
}

EmotionLabel expert_agent(EmotionLabel truth, double accuracy, Rng& rng) {
  if (accuracy < 0.0 || accuracy > 1.0) {
    throw std::invalid_argument("expert_agent: accuracy must lie in [0,1]");
  }
  if (rng.uniform() < accuracy) return truth;
  const int t = static_cast<int>(truth);
  const int other = static_cast<int>(rng.below(7));
  return static_cast<EmotionLabel>(other >= t ? other + 1 : other);
}

PipelineReport simulate_annotation_pipeline(const Manifest& manifest, AnnotationLabeler& labeler,
                                            double expert_accuracy, double pilot_frac, Rng& rng) {
  const std::size_t n = manifest.size();
  const auto pilot_size = static_cast<std::size_t>(std::floor(static_cast<double>(n) * pilot_frac));
  if (pilot_size == 0) throw std::invalid_argument("simulate_annotation_pipeline: empty pilot");
  if (!labeler.predict) throw std::invalid_argument("simulate_annotation_pipeline: no labeler");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);

  PipelineReport report;
  report.pilot_size = pilot_size;

  // Pilot: auto label, then expert correction.
  std::vector<std::size_t> pilot(order.begin(), order.begin() + static_cast<long>(pilot_size));
  std::vector<EmotionLabel> corrected;
  corrected.reserve(pilot_size);
  for (std::size_t idx : pilot) {
    const EmotionLabel machine = labeler.predict(idx);
    const EmotionLabel fixed = expert_agent(manifest.records[idx].label, expert_accuracy, rng);
    if (fixed != machine) ++report.corrected;
    corrected.push_back(fixed);
  }
  if (labeler.fine_tune) labeler.fine_tune(pilot, corrected);

  // Remainder: auto label with the tuned labeler, then the 5-expert vote.
  std::size_t accepted_correct = 0, prevote_correct = 0;
  for (auto it = order.begin() + static_cast<long>(pilot_size); it != order.end(); ++it) {
    const std::size_t idx = *it;
    const EmotionLabel truth = manifest.records[idx].label;
    const EmotionLabel proposed = labeler.predict(idx);
    ++report.auto_labeled;
    if (proposed == truth) ++prevote_correct;
    VoteSheet sheet;
    sheet.proposed = proposed;
    sheet.expert_labels.reserve(5);
    for (int e = 0; e < 5; ++e) {
      sheet.expert_labels.push_back(expert_agent(truth, expert_accuracy, rng));
    }
    const VoteOutcome outcome = consensus_vote(sheet);
    if (outcome.accepted) {
      ++report.accepted;
      if (proposed == truth) ++accepted_correct;
    } else {
      ++report.discarded;
    }
  }
  report.retention = report.auto_labeled == 0
                         ? 0.0
                         : static_cast<double>(report.accepted) /
                               static_cast<double>(report.auto_labeled);
  report.accepted_accuracy = report.accepted == 0 ? 0.0
                                                  : static_cast<double>(accepted_correct) /
                                                        static_cast<double>(report.accepted);
  report.prevote_accuracy = report.auto_labeled == 0
                                ? 0.0
                                : static_cast<double>(prevote_correct) /
                                      static_cast<double>(report.auto_labeled);
  return report;
}

}  // namespace tsa
