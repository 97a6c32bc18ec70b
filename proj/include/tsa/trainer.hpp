#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tsa/dataset.hpp"
#include "tsa/metrics.hpp"
#include "tsa/model.hpp"

namespace tsa {

struct TrainConfig {
  double lr = 1e-3;  // reference setting 1e-5 (for full-width pretrained features)
  std::size_t batch_size = 16;
  int max_epochs = 30;
  int patience = 5;  // <= 0 disables early stopping
  std::uint64_t seed = 0;
  int k_folds = 5;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  Reduction reduction = Reduction::mean;
  bool parallel = true;

  void validate() const;
};

// Adam with decoupled weight decay:
//   theta <- theta - lr * mhat / (sqrt(vhat) + eps) - lr * wd * theta
class AdamW {
 public:
  explicit AdamW(const ParamStore& store);
  void step(ParamStore& store, const TrainConfig& cfg);
  long steps() const { return t_; }

 private:
  std::vector<Tensor> m_, v_;
  long t_ = 0;
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;  // mean per-sample loss over the epoch
  double val_loss = 0.0;
  double val_wa = 0.0;
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
  int best_epoch = -1;  // highest validation WA; ties keep the earlier epoch
  std::string stop_reason;
};

// Validation loss is the monitored metric; improvement means strictly better
// than the best seen so far.
bool should_stop_early(const std::vector<double>& val_losses, int patience);

struct EvalResult {
  double loss = 0.0;
  ConfusionMatrix cm;
  MetricReport report;
};

EvalResult evaluate(ModelParams& params, const std::vector<FeatureBundle>& data,
                    Reduction reduction = Reduction::mean, bool parallel = true);

// Seed-deterministic epoch shuffling, batches of cfg.batch_size (partial last
// batch kept). Restores the best-epoch parameters before returning.
TrainHistory train(ModelParams& params, const std::vector<FeatureBundle>& train_set,
                   const std::vector<FeatureBundle>& val_set, const TrainConfig& cfg);

std::string history_to_jsonl(const TrainHistory& history);

struct FoldResult {
  MetricReport report;
  TrainHistory history;
};

struct KFoldResult {
  std::vector<FoldResult> folds;
  double mean_wa = 0.0, sd_wa = 0.0;
  double mean_wf1 = 0.0, sd_wf1 = 0.0;
};

// Per fold: train on the other k-1 folds (with a 10% validation slice carved
// out of them for early stopping), test on the held-out fold.
KFoldResult run_kfold(const Manifest& manifest, const std::vector<FeatureBundle>& bundles,
                      const ModelConfig& mcfg, const TrainConfig& tcfg);

}  // namespace tsa
