#pragma once

// The optimization loop: warmup/decay learning-rate schedule, epoch
// iteration over shuffled query examples, periodic dev-set evaluation with
// early stopping, and retention of the best-scoring parameter snapshot.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "hitter/batcher.hpp"
#include "hitter/checkpoint.hpp"
#include "hitter/common.hpp"
#include "hitter/eval.hpp"
#include "hitter/kg.hpp"
#include "hitter/model.hpp"
#include "hitter/rng.hpp"

namespace hitter {

struct TrainConfig {
  double lr = 0.01;
  double weight_decay = 0.1;
  int64_t batch_size = 512;
  int64_t max_epochs = 500;
  double warmup_fraction = 0.1;
  int64_t eval_every_epochs = 5;
  int64_t patience = 10;  // dev evaluations without improvement before stopping
  uint64_t seed = 0;

  int64_t neighbor_cap = 50;   // train-time context cap
  double keep_frac = 0.7;      // train-time neighborhood thinning
  MepConfig mep;               // all-zero default: no source perturbation
  double clip_norm = 0.0;      // 0 disables gradient clipping
  AdamStyle adam_style = AdamStyle::Decoupled;
  std::string checkpoint_path;  // best snapshot is also written here if set
  EvalConfig eval;

  void validate() const {
    if (lr <= 0.0) throw ConfigError("train: lr must be positive");
    if (weight_decay < 0.0) throw ConfigError("train: weight_decay must be >= 0");
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (max_epochs < 0) throw ConfigError("train: max_epochs must be >= 0");
    if (warmup_fraction <= 0.0 || warmup_fraction >= 1.0)
      throw ConfigError("train: warmup_fraction must be in (0,1)");
    if (eval_every_epochs < 1) throw ConfigError("train: eval_every_epochs must be >= 1");
    if (patience < 1) throw ConfigError("train: patience must be >= 1");
    if (neighbor_cap < 0) throw ConfigError("train: neighbor_cap must be >= 0");
    if (keep_frac <= 0.0 || keep_frac > 1.0)
      throw ConfigError("train: keep_frac must be in (0,1]");
    if (clip_norm < 0.0) throw ConfigError("train: clip_norm must be >= 0");
    mep.validate();
    eval.validate();
  }
};

// Piecewise-linear schedule: 0 up to peak over the first
// max(1, floor(warmup_fraction * total)) steps, then linearly back to 0 at
// step == total. Continuous, with its maximum exactly at the warmup end.
double lr_at_step(int64_t step, int64_t total_steps, double peak_lr,
                  double warmup_fraction = 0.1);

struct EpochRow {
  int64_t epoch = 0;    // 1-based
  double loss = 0.0;    // mean train loss over the epoch
  double dev_mrr = std::numeric_limits<double>::quiet_NaN();  // NaN = not evaluated
  double lr = 0.0;      // learning rate at the epoch's last step
  double seconds = 0.0;
};

struct RunLedger {
  std::vector<EpochRow> rows;
  double best_mrr = std::numeric_limits<double>::quiet_NaN();
  int64_t best_epoch = -1;

  // CSV with one row per epoch; dev_mrr empty on non-evaluation epochs.
  std::string to_csv() const;
};

template <typename T>
class TrainerT {
 public:
  TrainerT(HitterModelT<T>& model, const TrainConfig& cfg) : model_(model), cfg_(cfg) {
    cfg_.validate();
    for (ParamT<T>& p : model_.params()) {
      tensors_.push_back(p.tensor);
      exempt_.push_back(p.decay_exempt);
    }
  }

  int64_t step() const { return step_; }
  int64_t total_steps() const { return total_steps_; }

  // Fix the schedule length; fit() sets this to max_epochs * steps_per_epoch
  // up front, so early stopping truncates the schedule instead of rescaling.
  void set_schedule(int64_t total_steps) {
    if (total_steps < 1) throw ConfigError("train: schedule needs at least one step");
    total_steps_ = total_steps;
  }

  // One optimization step; returns the batch loss. The learning rate is
  // taken from the schedule at the current step counter.
  double train_step(const Batch& batch) {
    if (total_steps_ == 0) throw ConfigError("train: set_schedule before train_step");
    const double lr = lr_at_step(step_, total_steps_, cfg_.lr, cfg_.warmup_fraction);
    double loss_value = 0.0;
    try {
      model_.zero_grad();
      TapeT<T> tape;
      auto f = model_.forward(&tape, batch, Mode::Train, rng_);
      auto loss = model_.total_loss(&tape, f, batch);
      loss_value = static_cast<double>(loss.item());
      if (!std::isfinite(loss_value)) throw NumericError("loss is not finite");
      tape.backward(loss);
    } catch (const NumericError& e) {
      throw NumericError(std::string(e.what()) + diagnostic_suffix(batch));
    }
    if (cfg_.clip_norm > 0.0) clip_grad_norm<T>(tensors_, cfg_.clip_norm);
    AdamConfigT<T> acfg;
    acfg.style = cfg_.adam_style;
    adam_step<T>(tensors_, exempt_, adam_, static_cast<T>(lr),
                 static_cast<T>(cfg_.weight_decay), acfg);
    last_lr_ = lr;
    ++step_;
    return loss_value;
  }

  // Full training run with periodic dev evaluation and early stopping. The
  // model is left holding the best-scoring parameters. All randomness comes
  // from per-epoch forks of cfg.seed, so runs are bit-reproducible.
  RunLedger fit(const std::vector<Triple>& train, const std::vector<Triple>& valid,
                const Vocab& vocab, const NeighborIndex& train_index,
                const FilterIndex& filter) {
    if (train.empty()) throw ConfigError("fit: empty training set");
    if (cfg_.max_epochs == 0) throw ConfigError("fit: max_epochs is 0, no training performed");

    rng_ = Rng(cfg_.seed);
    std::vector<QueryExample> base =
        build_query_examples(train, vocab, train_index, Mode::Train);
    const int64_t examples = static_cast<int64_t>(base.size());
    const int64_t steps_per_epoch = (examples + cfg_.batch_size - 1) / cfg_.batch_size;
    set_schedule(cfg_.max_epochs * steps_per_epoch);

    RunLedger ledger;
    std::vector<std::vector<T>> best_params;
    int64_t evals_since_best = 0;
    const Rng fork_base(cfg_.seed);

    for (int64_t epoch = 1; epoch <= cfg_.max_epochs; ++epoch) {
      const auto t0 = std::chrono::steady_clock::now();
      Rng epoch_rng = fork_base.fork(static_cast<uint64_t>(epoch));
      std::vector<int64_t> order(base.size());
      for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int64_t>(i);
      epoch_rng.shuffle(order);

      double loss_sum = 0.0;
      int64_t batches = 0;
      for (int64_t start = 0; start < examples; start += cfg_.batch_size) {
        const int64_t stop = std::min(examples, start + cfg_.batch_size);
        std::vector<QueryExample> chunk;
        chunk.reserve(static_cast<size_t>(stop - start));
        for (int64_t i = start; i < stop; ++i)
          chunk.push_back(base[static_cast<size_t>(order[static_cast<size_t>(i)])]);
        for (QueryExample& ex : chunk) {
          ex.neighbors = sample_neighborhood(ex.neighbors, cfg_.neighbor_cap, cfg_.keep_frac,
                                             Mode::Train, epoch_rng);
          apply_mep(ex, cfg_.mep, model_.num_entities(), epoch_rng);
        }
        Batch batch = collate(chunk, cfg_.neighbor_cap, model_.mask_token());
        loss_sum += train_step(batch);
        ++batches;
      }

      EpochRow row;
      row.epoch = epoch;
      row.loss = loss_sum / static_cast<double>(batches);
      row.lr = last_lr_;

      bool stop_now = false;
      if (epoch % cfg_.eval_every_epochs == 0 || epoch == cfg_.max_epochs) {
        const EvalResult res =
            evaluate_split(model_, valid, vocab, train_index, filter, cfg_.eval);
        row.dev_mrr = res.filtered.mrr;
        if (ledger.best_epoch < 0 || row.dev_mrr > ledger.best_mrr) {
          ledger.best_mrr = row.dev_mrr;
          ledger.best_epoch = epoch;
          evals_since_best = 0;
          snapshot(best_params);
          if (!cfg_.checkpoint_path.empty()) save_checkpoint(cfg_.checkpoint_path, model_);
        } else {
          ++evals_since_best;
          if (evals_since_best >= cfg_.patience) stop_now = true;
        }
      }

      row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      ledger.rows.push_back(row);
      if (stop_now) break;
    }

    if (!best_params.empty()) restore(best_params);
    return ledger;
  }

 private:
  std::string diagnostic_suffix(const Batch& batch) const {
    std::string s = " [step " + std::to_string(step_) + "; batch";
    const int64_t show = std::min<int64_t>(batch.batch_size, 8);
    for (int64_t i = 0; i < show; ++i)
      s += " (" + std::to_string(batch.src_original[static_cast<size_t>(i)]) + "," +
           std::to_string(batch.predicate[static_cast<size_t>(i)]) + "," +
           std::to_string(batch.target[static_cast<size_t>(i)]) + ")";
    if (batch.batch_size > show) s += " ...";
    return s + "]";
  }

  void snapshot(std::vector<std::vector<T>>& into) const {
    into.clear();
    for (const TensorT<T>& t : tensors_) into.push_back(t.values());
  }

  void restore(const std::vector<std::vector<T>>& from) {
    for (size_t i = 0; i < tensors_.size(); ++i) tensors_[i].values() = from[i];
  }

  HitterModelT<T>& model_;
  TrainConfig cfg_;
  std::vector<TensorT<T>> tensors_;
  std::vector<bool> exempt_;
  AdamStateT<T> adam_;
  Rng rng_{0};
  int64_t step_ = 0;
  int64_t total_steps_ = 0;
  double last_lr_ = 0.0;
};

using Trainer = TrainerT<float>;

}  // namespace hitter
