#include "wsense/train.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>

namespace wsense {

void TrainConfig::validate() const {
  if (epochs == 0 || batch_size == 0 || eval_batch_size == 0) {
    throw ConfigError("epochs and batch sizes must be positive");
  }
  if (!(lr_min > 0.0) || !(lr_init >= lr_min)) throw ConfigError("need 0 < lr_min <= lr_init");
  if (lr_patience == 0 || early_stop_patience == 0) throw ConfigError("patience values must be positive");
  if (!(lr_factor > 0.0 && lr_factor < 1.0)) throw ConfigError("lr_factor must lie in (0, 1)");
}

TrainConfig TrainConfig::for_dataset(Dataset d) {
  TrainConfig cfg;
  cfg.batch_size = profile(d).batch_size;
  return cfg;
}

namespace {

constexpr double kProbFloor = 1e-12;

void require_probs(const Tensor& probs, std::size_t rows) {
  if (probs.rank() != 2 || probs.extent(0) != rows) {
    throw DimensionError("probabilities " + to_string(probs.shape()) + " vs " + std::to_string(rows) +
                         " targets");
  }
}

}  // namespace

LossResult cross_entropy_loss(const Tensor& probs, std::span<const int> targets) {
  require_probs(probs, targets.size());
  const std::size_t B = probs.extent(0), K = probs.extent(1);
  LossResult r;
  r.logit_grad = Tensor(probs.shape());
  if (B == 0) return r;
  for (std::size_t b = 0; b < B; ++b) {
    const int t = targets[b];
    if (t < 0 || static_cast<std::size_t>(t) >= K) throw ValueError("target class out of range");
    r.loss -= std::log(std::max(probs[b * K + static_cast<std::size_t>(t)], kProbFloor));
    for (std::size_t k = 0; k < K; ++k) {
      r.logit_grad[b * K + k] = (probs[b * K + k] - (k == static_cast<std::size_t>(t) ? 1.0 : 0.0)) /
                                static_cast<double>(B);
    }
  }
  r.loss /= static_cast<double>(B);
  return r;
}

LossResult cross_entropy_loss(const Tensor& probs, const Tensor& one_hot) {
  if (one_hot.shape() != probs.shape()) {
    throw DimensionError("targets " + to_string(one_hot.shape()) + " vs probabilities " +
                         to_string(probs.shape()));
  }
  const std::size_t B = probs.extent(0), K = probs.extent(1);
  std::vector<int> targets(B);
  for (std::size_t b = 0; b < B; ++b) {
    const auto row = one_hot.data().subspan(b * K, K);
    const auto hot = std::max_element(row.begin(), row.end()) - row.begin();
    if (std::count(row.begin(), row.end(), 1.0) != 1 || std::count(row.begin(), row.end(), 0.0) != static_cast<std::ptrdiff_t>(K - 1)) {
      throw ValueError("target row " + std::to_string(b) + " is not one-hot");
    }
    targets[b] = static_cast<int>(hot);
  }
  return cross_entropy_loss(probs, targets);
}

void adam_step(std::span<NamedTensor* const> params, std::span<const Tensor> grads, AdamState& state,
               double lr, double beta1, double beta2, double epsilon) {
  if (grads.size() != params.size()) throw DimensionError("gradient list does not match parameters");
  if (state.m.empty()) {
    for (const NamedTensor* p : params) {
      state.m.emplace_back(p->value.shape());
      state.v.emplace_back(p->value.shape());
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(beta1, t);
  const double c2 = 1.0 - std::pow(beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    NamedTensor& p = *params[i];
    if (!p.trainable) continue;
    if (grads[i].shape() != p.value.shape() || state.m[i].shape() != p.value.shape()) {
      throw DimensionError("shape mismatch for parameter " + p.name);
    }
    double* w = p.value.raw();
    double* m = state.m[i].raw();
    double* v = state.v[i].raw();
    const double* g = grads[i].raw();
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
      v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
      w[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + epsilon);
    }
  }
}

PlateauScheduler::PlateauScheduler(double lr_init, double factor, std::size_t patience, double lr_min)
    : lr_(lr_init), factor_(factor), lr_min_(lr_min), patience_(patience) {}

double PlateauScheduler::step(double value) {
  if (value < best_) {
    best_ = value;
    wait_ = 0;
    return lr_;
  }
  if (++wait_ >= patience_) {
    lr_ = std::max(lr_ * factor_, lr_min_);
    // 1e-4 * 0.1^3 lands a rounding step above 1e-7; treat that as the floor.
    if (lr_ - lr_min_ <= 1e-9 * lr_min_) lr_ = lr_min_;
    wait_ = 0;
  }
  return lr_;
}

bool EarlyStopping::step(double value) {
  improved_ = value < best_;
  if (improved_) {
    best_ = value;
    best_epoch_ = epoch_;
    wait_ = 0;
  } else {
    ++wait_;
  }
  ++epoch_;
  return wait_ >= patience_;
}

namespace {

std::vector<int> argmax_rows(const Tensor& probs) {
  const std::size_t B = probs.extent(0), K = probs.extent(1);
  std::vector<int> out(B);
  for (std::size_t b = 0; b < B; ++b) {
    const double* row = probs.raw() + b * K;
    out[b] = static_cast<int>(std::max_element(row, row + K) - row);
  }
  return out;
}

std::vector<int> labels_of(std::span<const Window> windows, std::span<const std::size_t> idx) {
  std::vector<int> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(windows[i].label);
  return out;
}

}  // namespace

EvalResult evaluate(const ModelSpec& model, std::span<const Window> windows, std::size_t batch_size) {
  EvalResult r;
  if (windows.empty()) return r;
  std::size_t correct = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < windows.size(); start += batch_size) {
    const std::size_t end = std::min(windows.size(), start + batch_size);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const Tensor probs = forward(model, stack_windows(windows, idx), Mode::infer);
    const auto targets = labels_of(windows, idx);
    r.loss += cross_entropy_loss(probs, targets).loss * static_cast<double>(idx.size());
    const auto pred = argmax_rows(probs);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      r.predictions.push_back(pred[i]);
      correct += pred[i] == targets[i];
    }
  }
  r.loss /= static_cast<double>(windows.size());
  r.accuracy = static_cast<double>(correct) / static_cast<double>(windows.size());
  return r;
}

TrainState fit(ModelSpec& model, const DatasetSplit& split, const TrainConfig& cfg,
               const EpochCallback& on_epoch) {
  cfg.validate();
  if (split.train.empty()) throw ConfigError("training partition is empty");
  const auto& shape = split.train.front().values.shape();
  if (shape[0] != model.window_size || shape[1] != model.in_channels) {
    throw DimensionError("windows " + to_string(shape) + " do not match model input");
  }
  if (split.class_names.size() != model.n_classes) {
    throw ConfigError("split has " + std::to_string(split.class_names.size()) + " classes, model " +
                      std::to_string(model.n_classes));
  }

  std::vector<ParamRef> refs = parameters(model);
  std::vector<NamedTensor*> params;
  for (auto& r : refs) params.push_back(r.param);
  auto snapshot = [&] {
    std::vector<Tensor> s;
    for (auto* p : params) s.push_back(p->value);
    return s;
  };

  TrainState state;
  state.lr = cfg.lr_init;
  PlateauScheduler plateau(cfg.lr_init, cfg.lr_factor, cfg.lr_patience, cfg.lr_min);
  EarlyStopping stopper(cfg.early_stop_patience);
  std::vector<Tensor> best = snapshot();

  Rng shuffle_rng(cfg.seed);
  Rng dropout_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(split.train.size());
  std::iota(order.begin(), order.end(), 0);
  GradTape tape;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      const auto targets = labels_of(split.train, idx);
      Tensor probs;
      LossResult loss;
      try {
        probs = forward(model, stack_windows(split.train, idx), Mode::train, &dropout_rng, tape);
        loss = cross_entropy_loss(probs, targets);
      } catch (const ValueError& e) {
        // Non-finite activations surface here once the weights blow up.
        state.epoch = epoch;
        throw TrainingDiverged(std::string("training diverged: ") + e.what(), state);
      }
      if (!std::isfinite(loss.loss)) {
        state.epoch = epoch;
        throw TrainingDiverged("non-finite training loss in epoch " + std::to_string(epoch), state);
      }
      backward(model, tape, loss.logit_grad, GradientOf::logits);
      adam_step(params, tape.grads, state.adam, state.lr, cfg.beta1, cfg.beta2, cfg.adam_epsilon);
      loss_sum += loss.loss * static_cast<double>(idx.size());
      const auto pred = argmax_rows(probs);
      for (std::size_t i = 0; i < idx.size(); ++i) correct += pred[i] == targets[i];
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = state.lr;
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    rec.train_accuracy = static_cast<double>(correct) / static_cast<double>(order.size());
    const std::span<const Window> monitor = split.test.empty() ? std::span<const Window>(split.train)
                                                               : std::span<const Window>(split.test);
    const EvalResult val = evaluate(model, monitor, cfg.eval_batch_size);
    rec.val_loss = val.loss;
    rec.val_accuracy = val.accuracy;
    state.history.push_back(rec);
    state.epoch = epoch + 1;
    if (on_epoch) on_epoch(rec);
    if (!std::isfinite(val.loss)) {
      throw TrainingDiverged("non-finite validation loss in epoch " + std::to_string(epoch), state);
    }

    const bool stop = stopper.step(val.loss);
    if (stopper.improved()) {
      best = snapshot();
      state.best_val_loss = val.loss;
      state.best_epoch = epoch;
    }
    state.epochs_since_improvement = stopper.wait();
    state.lr = plateau.step(val.loss);
    if (stop) {
      state.stopped_early = true;
      break;
    }
  }

  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = best[i];
  return state;
}

void write_history_csv(std::ostream& out, std::span<const EpochRecord> history) {
  out << "epoch,lr,train_loss,val_loss,val_acc\n" << std::setprecision(10);
  for (const auto& r : history) {
    out << r.epoch << ',' << r.lr << ',' << r.train_loss << ',' << r.val_loss << ',' << r.val_accuracy
        << '\n';
  }
}

}  // namespace wsense
