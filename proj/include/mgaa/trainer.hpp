#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include "mgaa/eer.hpp"
#include "mgaa/features.hpp"
#include "mgaa/model.hpp"
#include "mgaa/optimizer.hpp"

namespace mgaa {

struct TrainConfig {
  int batch_size = 256;
  int micro_batch = 32;  // gradient accumulation slice, memory knob only
  int max_epochs = 5;
  int patience = 3;
  double lr = 1e-3;
  double lr_min = 1e-6;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 1e-4;
  uint64_t seed = 0;

  void validate() const {
    require(batch_size > 0, "train: batch size must be positive");
    require(micro_batch > 0 && micro_batch <= batch_size,
            "train: micro batch must be in [1, batch_size]");
    require(max_epochs > 0, "train: need at least one epoch");
    require(patience > 0 && patience <= max_epochs,
            "train: patience must be in [1, max_epochs]");
    require(lr > 0 && lr_min >= 0 && lr_min <= lr, "train: bad learning rates");
    require(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1, "train: bad betas");
    require(weight_decay >= 0, "train: weight decay must be >= 0");
  }
};

struct LabeledFeature {
  std::vector<float> data;  // TFFeature payload, kFreq * kTime
  int label = 0;            // 0 real, 1 fake
};

using Dataset = std::vector<LabeledFeature>;

struct EpochStats {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_eer = 0.0;
};

template <typename T>
struct TrainResult {
  std::vector<EpochStats> history;
  int best_epoch = 0;
  double best_val_loss = 0.0;
  long total_steps = 0;
};

namespace trainer_detail {

template <typename T>
Tensor<T> make_batch(const Dataset& ds, const std::vector<size_t>& order, size_t lo,
                     size_t hi, int freq, int time, std::vector<int>* labels) {
  const int b = int(hi - lo);
  Tensor<T> batch(b, 1, freq, time);
  labels->resize(size_t(b));
  for (int i = 0; i < b; ++i) {
    const auto& s = ds[order[lo + size_t(i)]];
    require(int(s.data.size()) == freq * time, "train: feature size mismatch");
    T* dst = &batch(i, 0, 0, 0);
    for (size_t k = 0; k < s.data.size(); ++k) dst[k] = T(s.data[k]);
    (*labels)[size_t(i)] = s.label;
  }
  return batch;
}

template <typename T>
struct Snapshot {
  std::vector<Tensor<T>> values;
  std::vector<Tensor<T>> buffers;

  static Snapshot take(const ParamStore<T>& store) {
    Snapshot s;
    for (const auto& e : store.entries) s.values.push_back(e.value);
    for (const auto& [n, b] : store.buffers) s.buffers.push_back(b);
    return s;
  }

  void restore(ParamStore<T>& store) const {
    for (size_t i = 0; i < values.size(); ++i) store.entries[i].value = values[i];
    for (size_t i = 0; i < buffers.size(); ++i) store.buffers[i].second = buffers[i];
  }
};

}  // namespace trainer_detail

// Mean loss and fake-class scores over a dataset in eval mode.
template <typename T>
std::pair<double, ScoreSet> evaluate_dataset(Network<T>& net, const Dataset& ds,
                                             int micro_batch) {
  const auto& cfg = net.config();
  std::vector<size_t> order(ds.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  double loss_sum = 0.0;
  ScoreSet scores;
  for (size_t lo = 0; lo < ds.size(); lo += size_t(micro_batch)) {
    const size_t hi = std::min(ds.size(), lo + size_t(micro_batch));
    std::vector<int> labels;
    Tensor<T> batch = trainer_detail::make_batch<T>(ds, order, lo, hi, cfg.in_freq,
                                                    cfg.in_time, &labels);
    Tape<T> tp;
    BoundGraph g = net.forward(tp, batch, /*training=*/false);
    const auto& logits = tp.val(g.logits);
    for (int i = 0; i < logits.b(); ++i) {
      const auto p = ops::softmax_row(logits, i);
      scores.scores.push_back(p[1]);  // probability of class fake
      scores.labels.push_back(labels[size_t(i)]);
    }
    const int loss_id = ops::cross_entropy_mean(tp, g.logits, labels);
    loss_sum += double(tp.val(loss_id)[0]) * double(hi - lo);
  }
  return {loss_sum / double(ds.size()), std::move(scores)};
}

// Full training loop: seeded shuffling, gradient accumulation over micro
// batches, AdamW with cosine annealing over the total step budget, early
// stopping on validation loss. Returns per-epoch history and leaves the
// network holding the best-validation-loss parameters.
template <typename T>
TrainResult<T> train(Network<T>& net, const Dataset& train_set, const Dataset& val_set,
                     const TrainConfig& tc) {
  tc.validate();
  require(!train_set.empty(), "train: empty training split");
  require(!val_set.empty(), "train: empty validation split");

  const auto& cfg = net.config();
  const long steps_per_epoch =
      long((train_set.size() + size_t(tc.batch_size) - 1) / size_t(tc.batch_size));
  CosineSchedule sched{tc.lr, tc.lr_min, steps_per_epoch * tc.max_epochs};
  AdamW<T> opt(tc.beta1, tc.beta2, tc.weight_decay);
  EarlyStopping stop(tc.patience);
  Rng shuffle_rng(mix64(tc.seed ^ 0x7368756666ull));
  Rng dropout_rng(mix64(tc.seed ^ 0x64726f70ull));

  TrainResult<T> result;
  trainer_detail::Snapshot<T> best;
  std::vector<size_t> order(train_set.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  long step = 0;
  for (int epoch = 1; epoch <= tc.max_epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double train_loss_sum = 0.0;
    for (size_t blo = 0; blo < order.size(); blo += size_t(tc.batch_size)) {
      const size_t bhi = std::min(order.size(), blo + size_t(tc.batch_size));
      const double batch_n = double(bhi - blo);
      net.params().zero_grads();
      for (size_t mlo = blo; mlo < bhi; mlo += size_t(tc.micro_batch)) {
        const size_t mhi = std::min(bhi, mlo + size_t(tc.micro_batch));
        std::vector<int> labels;
        Tensor<T> batch = trainer_detail::make_batch<T>(train_set, order, mlo, mhi,
                                                        cfg.in_freq, cfg.in_time, &labels);
        Tape<T> tp;
        BoundGraph g = net.forward(tp, batch, /*training=*/true, &dropout_rng);
        const int loss_id = ops::cross_entropy_mean(tp, g.logits, labels);
        train_loss_sum += double(tp.val(loss_id)[0]) * double(mhi - mlo);
        tp.backward(loss_id, T(double(mhi - mlo) / batch_n));
        net.accumulate_grads(tp, g);
      }
      opt.step(net.params(), sched.at(step));
      ++step;
    }

    auto [val_loss, val_scores] = evaluate_dataset(net, val_set, tc.micro_batch);
    double val_eer = std::nan("");
    bool both = false, seen[2] = {false, false};
    for (int y : val_scores.labels) seen[y] = true;
    both = seen[0] && seen[1];
    if (both) val_eer = compute_eer(val_scores).eer;

    result.history.push_back(EpochStats{epoch, sched.at(step - 1),
                                        train_loss_sum / double(train_set.size()),
                                        val_loss, val_eer});
    const bool should_stop = stop.observe(val_loss);
    if (stop.improved()) {
      best = trainer_detail::Snapshot<T>::take(net.params());
      result.best_epoch = epoch;
      result.best_val_loss = val_loss;
    }
    if (should_stop) break;
  }
  result.total_steps = step;
  if (!best.values.empty()) best.restore(net.params());
  return result;
}

inline void write_history_csv(const std::filesystem::path& path,
                              const std::vector<EpochStats>& history) {
  std::ofstream os(path);
  require(os.good(), "cannot create history file: ", path.string());
  os << "epoch,lr,train_loss,val_loss,val_eer\n";
  for (const auto& e : history)
    os << e.epoch << "," << e.lr << "," << e.train_loss << "," << e.val_loss << ","
       << e.val_eer << "\n";
  require(os.good(), "short write: ", path.string());
}

}  // namespace mgaa
