#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <span>
#include <vector>

#include "wsense/dataset.hpp"
#include "wsense/errors.hpp"
#include "wsense/model.hpp"
#include "wsense/profile.hpp"

namespace wsense {

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 16;
  double lr_init = 1e-4;
  double lr_min = 1e-7;
  std::size_t lr_patience = 5;
  double lr_factor = 0.1;
  std::size_t early_stop_patience = 20;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::size_t eval_batch_size = 128;

  /// Throws ConfigError on inconsistent values.
  void validate() const;

  /// Defaults with the dataset's batch size (WISDM 16, PAMAP2 32).
  static TrainConfig for_dataset(Dataset d);
};

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::size_t step = 0;
};

struct TrainState {
  std::size_t epoch = 0;  // epochs completed
  AdamState adam;
  double best_val_loss = std::numeric_limits<double>::infinity();
  std::size_t best_epoch = 0;
  std::size_t epochs_since_improvement = 0;
  double lr = 0.0;
  bool stopped_early = false;
  std::vector<EpochRecord> history;
};

/// Thrown by fit when a loss turns non-finite; carries the state reached.
class TrainingDiverged : public Error {
 public:
  TrainingDiverged(const std::string& what, TrainState state)
      : Error(what), state_(std::move(state)) {}
  const TrainState& state() const { return state_; }

 private:
  TrainState state_;
};

struct LossResult {
  double loss = 0.0;
  /// Gradient with respect to the logits feeding the softmax: (probs - onehot) / B.
  Tensor logit_grad;
};

/// Mean of -log p_target (probabilities clamped at 1e-12).
LossResult cross_entropy_loss(const Tensor& probs, std::span<const int> targets);
/// Same with a (B, K) one-hot target matrix.
LossResult cross_entropy_loss(const Tensor& probs, const Tensor& one_hot);

/// One Adam update with bias correction over the trainable entries of
/// `params`; `grads` is aligned with `params`. Moments are created on first use.
void adam_step(std::span<NamedTensor* const> params, std::span<const Tensor> grads, AdamState& state,
               double lr, double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8);

/// Multiplies the rate by `factor` (floored at `lr_min`) after `patience`
/// consecutive epochs without a strictly lower monitored value.
class PlateauScheduler {
 public:
  PlateauScheduler(double lr_init, double factor, std::size_t patience, double lr_min);
  /// Feeds one epoch's monitored value; returns the rate for the next epoch.
  double step(double value);
  double lr() const { return lr_; }
  std::size_t wait() const { return wait_; }

 private:
  double lr_, factor_, lr_min_;
  std::size_t patience_;
  std::size_t wait_ = 0;
  double best_ = std::numeric_limits<double>::infinity();
};

/// Signals a stop once `patience` consecutive epochs fail to improve on the
/// best monitored value.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience) : patience_(patience) {}
  /// Returns true when training should stop after this epoch.
  bool step(double value);
  bool improved() const { return improved_; }
  std::size_t best_epoch() const { return best_epoch_; }
  double best() const { return best_; }
  std::size_t wait() const { return wait_; }

 private:
  std::size_t patience_;
  std::size_t wait_ = 0;
  std::size_t epoch_ = 0;
  std::size_t best_epoch_ = 0;
  bool improved_ = false;
  double best_ = std::numeric_limits<double>::infinity();
};

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
  std::vector<int> predictions;
};

/// Inference-mode loss, accuracy and argmax predictions over `windows`.
EvalResult evaluate(const ModelSpec& model, std::span<const Window> windows,
                    std::size_t batch_size = 128);

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Mini-batch Adam on split.train, monitoring loss on split.test (train loss
/// when the test partition is empty). Reduces the rate on plateaus, stops
/// early, and restores the parameters of the best monitored epoch.
TrainState fit(ModelSpec& model, const DatasetSplit& split, const TrainConfig& cfg,
               const EpochCallback& on_epoch = {});

/// epoch,lr,train_loss,val_loss,val_acc
void write_history_csv(std::ostream& out, std::span<const EpochRecord> history);

}  // namespace wsense
