#include "tsa/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace tsa {

void TrainConfig::validate() const {
  // lr = 0 is allowed as a degenerate no-op configuration (sanity runs).
  if (lr < 0.0) throw std::invalid_argument("TrainConfig: lr must be non-negative");
  if (batch_size == 0) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
  if (max_epochs < 1) throw std::invalid_argument("TrainConfig: max_epochs must be >= 1");
  if (weight_decay < 0.0) throw std::invalid_argument("TrainConfig: weight_decay must be >= 0");
}

AdamW::AdamW(const ParamStore& store) {
  m_.reserve(store.size());
  v_.reserve(store.size());
  for (const auto& p : store) {
    m_.emplace_back(p->value.shape());
    v_.emplace_back(p->value.shape());
  }
}

void AdamW::step(ParamStore& store, const TrainConfig& cfg) {
  if (m_.size() != store.size()) throw std::invalid_argument("AdamW: store size changed");
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t_));
  for (std::size_t pi = 0; pi < store.size(); ++pi) {
    Parameter& p = store.at(pi);
    Tensor& m = m_[pi];
    Tensor& v = v_[pi];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      if (!std::isfinite(g)) {
        throw std::runtime_error("AdamW: non-finite gradient in " + p.name);
      }
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p.value[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps) +
                    cfg.lr * cfg.weight_decay * p.value[i];
    }
  }
}

bool should_stop_early(const std::vector<double>& val_losses, int patience) {
  if (patience <= 0 || val_losses.empty()) return false;
  double best = val_losses[0];
  std::size_t last_improvement = 0;
  for (std::size_t i = 1; i < val_losses.size(); ++i) {
    if (val_losses[i] < best) {
      best = val_losses[i];
      last_improvement = i;
    }
  }
  return val_losses.size() - 1 - last_improvement >= static_cast<std::size_t>(patience);
}

namespace {

std::vector<Tensor> snapshot_values(const ParamStore& store) {
  std::vector<Tensor> snap;
  snap.reserve(store.size());
  for (const auto& p : store) snap.push_back(p->value);
  return snap;
}

void restore_values(ParamStore& store, const std::vector<Tensor>& snap) {
  for (std::size_t i = 0; i < store.size(); ++i) store.at(i).value = snap[i];
}

// Evaluates one graph per sample. Parallel across samples; the reductions run
// afterwards in sample order, so the result is thread-count independent.
template <class Fn>
void for_each_sample(std::size_t n, bool parallel, const Fn& fn) {
  std::exception_ptr error;
#pragma omp parallel for schedule(static) if (parallel && n > 1)
  for (std::size_t i = 0; i < n; ++i) {
    try {
      fn(i);
    } catch (...) {
#pragma omp critical
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace

EvalResult evaluate(ModelParams& params, const std::vector<FeatureBundle>& data,
                    Reduction reduction, bool parallel) {
  if (data.empty()) throw std::invalid_argument("evaluate: empty data");
  std::vector<double> losses(data.size(), 0.0);
  std::vector<int> preds(data.size(), 0);
  for_each_sample(data.size(), parallel, [&](std::size_t i) {
    Graph g;
    ModelOutput out = model_forward(g, params, data[i], /*with_loss=*/true, Reduction::mean);
    losses[i] = out.loss_value;
    preds[i] = out.predicted;
  });
  EvalResult result;
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    total += losses[i];
    result.cm.add(static_cast<int>(data[i].label), preds[i]);
  }
  result.loss = reduction == Reduction::mean ? total / static_cast<double>(data.size()) : total;
  result.report = f1_report(result.cm);
  return result;
}

TrainHistory train(ModelParams& params, const std::vector<FeatureBundle>& train_set,
                   const std::vector<FeatureBundle>& val_set, const TrainConfig& cfg) {
  cfg.validate();
  if (train_set.empty() || val_set.empty()) {
    throw std::invalid_argument("train: train and validation sets must be non-empty");
  }

  Rng shuffle_rng(cfg.seed);
  AdamW opt(params.store);
  TrainHistory history;
  std::vector<double> val_losses;
  std::vector<Tensor> best_snapshot = snapshot_values(params.store);
  double best_wa = -1.0;

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t b = std::min(cfg.batch_size, order.size() - start);
      params.store.zero_grads();
      std::vector<std::unique_ptr<Graph>> graphs(b);
      std::vector<double> item_loss(b, 0.0);
      const double seed_scale =
          cfg.reduction == Reduction::mean ? 1.0 / static_cast<double>(b) : 1.0;
      try {
        for_each_sample(b, cfg.parallel, [&](std::size_t bi) {
          graphs[bi] = std::make_unique<Graph>();
          ModelOutput out = model_forward(*graphs[bi], params, train_set[order[start + bi]],
                                          /*with_loss=*/true, Reduction::mean);
          item_loss[bi] = out.loss_value;
          graphs[bi]->backward(out.loss, seed_scale);
        });
      } catch (const std::exception& e) {
        std::ostringstream os;
        os << "train: aborted at epoch " << epoch << ", batch " << start / cfg.batch_size
           << ", optimizer step " << opt.steps() << ": " << e.what();
        throw std::runtime_error(os.str());
      }
      // Deterministic accumulation: items merge in batch order.
      double batch_loss = 0.0;
      for (std::size_t bi = 0; bi < b; ++bi) {
        graphs[bi]->apply_gradients();
        batch_loss += item_loss[bi];
      }
      if (!std::isfinite(batch_loss)) {
        std::ostringstream os;
        os << "train: divergence (non-finite loss) at epoch " << epoch << ", batch "
           << start / cfg.batch_size << ", optimizer step " << opt.steps();
        throw std::runtime_error(os.str());
      }
      epoch_loss += batch_loss;
      opt.step(params.store, cfg);
    }

    EvalResult val;
    try {
      val = evaluate(params, val_set, Reduction::mean, cfg.parallel);
    } catch (const std::exception& e) {
      std::ostringstream os;
      os << "train: aborted during validation at epoch " << epoch << ", optimizer step "
         << opt.steps() << ": " << e.what();
      throw std::runtime_error(os.str());
    }
    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = epoch_loss / static_cast<double>(train_set.size());
    stats.val_loss = val.loss;
    stats.val_wa = val.report.wa;
    history.epochs.push_back(stats);
    val_losses.push_back(val.loss);

    if (val.report.wa > best_wa) {
      best_wa = val.report.wa;
      best_snapshot = snapshot_values(params.store);
      history.best_epoch = epoch;
    }
    if (should_stop_early(val_losses, cfg.patience)) {
      history.stop_reason = "early_stop";
      break;
    }
  }
  if (history.stop_reason.empty()) history.stop_reason = "max_epochs";
  restore_values(params.store, best_snapshot);
  return history;
}

std::string history_to_jsonl(const TrainHistory& history) {
  std::ostringstream os;
  for (const EpochStats& e : history.epochs) {
    nlohmann::json j;
    j["epoch"] = e.epoch;
    j["train_loss"] = e.train_loss;
    j["val_loss"] = e.val_loss;
    j["val_wa"] = e.val_wa;
    j["best"] = e.epoch == history.best_epoch;
    os << j.dump() << '\n';
  }
  return os.str();
}

KFoldResult run_kfold(const Manifest& manifest, const std::vector<FeatureBundle>& bundles,
                      const ModelConfig& mcfg, const TrainConfig& tcfg) {
  if (bundles.size() != manifest.size()) {
    throw std::invalid_argument("run_kfold: bundles must align with the manifest");
  }
  const Folds folds = kfold(manifest, tcfg.k_folds, tcfg.seed);
  KFoldResult result;
  for (std::size_t f = 0; f < folds.folds.size(); ++f) {
    std::vector<std::size_t> pool;
    for (std::size_t other = 0; other < folds.folds.size(); ++other) {
      if (other == f) continue;
      pool.insert(pool.end(), folds.folds[other].begin(), folds.folds[other].end());
    }
    Rng fold_rng(tcfg.seed ^ (0x9e3779b97f4a7c15ull + f));
    fold_rng.shuffle(pool);
    // 10% validation slice from the training folds, mirroring the 80/10/10 ratio.
    const std::size_t n_val = std::max<std::size_t>(1, pool.size() / 10);
    std::vector<FeatureBundle> val_set, train_set, test_set;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      (i < n_val ? val_set : train_set).push_back(bundles[pool[i]]);
    }
    for (std::size_t i : folds.folds[f]) test_set.push_back(bundles[i]);

    Rng init_rng(tcfg.seed + f);
    ModelParams params = build_model(mcfg, init_rng);
    TrainConfig fold_cfg = tcfg;
    fold_cfg.seed = tcfg.seed + f;
    FoldResult fr;
    fr.history = train(params, train_set, val_set, fold_cfg);
    fr.report = evaluate(params, test_set, Reduction::mean, tcfg.parallel).report;
    result.folds.push_back(std::move(fr));
  }
  double wa_sum = 0.0, wf1_sum = 0.0;
  for (const auto& fr : result.folds) {
    wa_sum += fr.report.wa;
    wf1_sum += fr.report.wf1;
  }
  const double k = static_cast<double>(result.folds.size());
  result.mean_wa = wa_sum / k;
  result.mean_wf1 = wf1_sum / k;
  double va = 0.0, vf = 0.0;
  for (const auto& fr : result.folds) {
    va += (fr.report.wa - result.mean_wa) * (fr.report.wa - result.mean_wa);
    vf += (fr.report.wf1 - result.mean_wf1) * (fr.report.wf1 - result.mean_wf1);
  }
  result.sd_wa = std::sqrt(va / k);
  result.sd_wf1 = std::sqrt(vf / k);
  return result;
}

}  // namespace tsa
