#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "tsa/rng.hpp"

namespace tsa {

// Fixed label indices; serialization uses the lowercase names.
enum class EmotionLabel : int {
  neutral = 0,
  anger = 1,
  joy = 2,
  surprise = 3,
  sadness = 4,
  patience = 5,
  enthusiasm = 6,
  expectation = 7,
};

const char* to_string(EmotionLabel label);
EmotionLabel parse_label(const std::string& token);  // throws with the offending token

// Reference class counts of the 14,938-sample corpus, indexed by label.
inline constexpr std::array<std::size_t, 8> kReferenceCounts = {7318, 821, 1619, 507,
                                                                430,  916, 834, 2493};
inline constexpr std::size_t kReferenceTotal = 14938;

struct SampleRecord {
  std::string level;
  std::string name;  // unique within a manifest
  std::string source;
  double start_time = 0.0;
  double end_time = 0.0;
  double duration = 0.0;
  std::string text;
  EmotionLabel label = EmotionLabel::neutral;
  int stage_id = 0;
  int subject_id = 0;
};

struct Manifest {
  std::vector<SampleRecord> records;
  std::string provenance;

  std::size_t size() const { return records.size(); }
};

// JSON-Lines manifest I/O. Load validates every record and reports the line
// number and field of the first violation.
Manifest load_manifest(const std::filesystem::path& path);
void save_manifest(const Manifest& manifest, const std::filesystem::path& path);
void validate_record(const SampleRecord& rec);  // throws naming the bad field

struct SplitSpec {
  std::vector<std::size_t> train, val, test;
};

// Shuffles by seed; sizes are floor(n*ratio) with the remainder assigned to
// train. Stratified mode applies the same rule within each class.
SplitSpec split(const Manifest& manifest, std::array<double, 3> ratios, std::uint64_t seed,
                bool stratified = false);

struct Folds {
  std::vector<std::vector<std::size_t>> folds;
};

Folds kfold(const Manifest& manifest, int k, std::uint64_t seed);

struct VoteSheet {
  EmotionLabel proposed = EmotionLabel::neutral;
  std::vector<EmotionLabel> expert_labels;  // exactly 5
};

struct VoteOutcome {
  bool accepted = false;
  EmotionLabel label = EmotionLabel::neutral;
};

// Accepts iff at least 4 of the 5 experts agree with the proposed label.
VoteOutcome consensus_vote(const VoteSheet& sheet);

struct ClassDistribution {
  std::array<std::size_t, 8> counts{};
  std::array<double, 8> proportions{};
  std::size_t total = 0;
};

ClassDistribution class_distribution(const Manifest& manifest);

// Largest-remainder apportionment of n samples over the reference class
// proportions; at n = 14,938 the quotas equal kReferenceCounts exactly.
std::array<std::size_t, 8> apportion_quotas(std::size_t n);

struct SynthConfig {
  std::size_t n_samples = 2000;
  std::size_t text_len = 6;
  std::size_t audio_len = 6;
  std::size_t video_len = 4;
  std::size_t dim = 32;  // must be >= 8 to host the class directions
  double audio_scale = 1.0;
  double text_scale = 0.6;
  double video_desc_scale = 0.25;
  double video_raw_scale = 0.1;
  double noise_sigma = 1.0;
  double instructional_prior = 0.9;  // id skew strength for the teacher-specific labels
  std::uint64_t seed = 0;
  std::size_t n_stages = 4;
  std::size_t n_subjects = 11;
};

// Writes manifest.jsonl, vocab.json and features/<name>.json under out_dir
// and returns the manifest. Deterministic in cfg.seed, byte for byte.
Manifest synthesize(const SynthConfig& cfg, const std::filesystem::path& out_dir);

const std::vector<std::string>& stage_names();
const std::vector<std::string>& subject_names();

// Returns truth with probability `accuracy`, otherwise uniform over the
// other seven labels.
EmotionLabel expert_agent(EmotionLabel truth, double accuracy, Rng& rng);

struct PipelineReport {
  std::size_t pilot_size = 0;
  std::size_t corrected = 0;      // pilot labels changed by the correction pass
  std::size_t auto_labeled = 0;   // remainder labeled by the tuned labeler
  std::size_t accepted = 0;
  std::size_t discarded = 0;
  double retention = 0.0;          // accepted / auto_labeled
  double accepted_accuracy = 0.0;  // label accuracy within the accepted set
  double prevote_accuracy = 0.0;   // labeler accuracy on the remainder, before voting
};

// The labeler under annotation: predict by sample index, optionally
// fine-tunable on a corrected pilot set. fine_tune may be a no-op.
struct AnnotationLabeler {
  std::function<EmotionLabel(std::size_t sample_index)> predict;
  std::function<void(const std::vector<std::size_t>& indices,
                     const std::vector<EmotionLabel>& labels)>
      fine_tune;
};

// Pilot selection -> auto label -> expert correction -> fine-tune ->
// full-corpus auto label -> 5-expert consensus vote.
PipelineReport simulate_annotation_pipeline(const Manifest& manifest, AnnotationLabeler& labeler,
                                            double expert_accuracy, double pilot_frac, Rng& rng);

}  // namespace tsa
