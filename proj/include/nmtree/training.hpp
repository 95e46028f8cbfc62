#ifndef NMTREE_TRAINING_HPP
#define NMTREE_TRAINING_HPP

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "nmtree/adam.hpp"
#include "nmtree/model.hpp"

namespace nmtree {

struct TrainConfig {
  double lr = 1e-3;
  double lr_decay = 0.9;
  std::size_t decay_every = 10;
  std::size_t epochs = 40;
  std::size_t batch_size = 32;
  double tau = 1.0;
  ModelDims dims;
  std::uint64_t seed = 1;
  int precision = 32;
  std::size_t min_count = 2;
  std::size_t early_stop_patience = 0;  // 0 disables early stopping
  std::size_t threads = 1;

  void validate() const {
    if (!(lr > 0.0)) throw std::invalid_argument("config: lr must be positive");
    if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw std::invalid_argument("config: lr_decay must be in (0, 1]");
    if (decay_every == 0 || epochs == 0 || batch_size == 0)
      throw std::invalid_argument("config: decay_every, epochs and batch_size must be positive");
    if (!(tau > 0.0)) throw std::invalid_argument("config: tau must be positive");
    if (precision != 32 && precision != 64) throw std::invalid_argument("config: precision must be 32 or 64");
    if (dims.d_x == 0 || dims.d_h == 0 || dims.embed_word == 0 || dims.embed_pos == 0 ||
        dims.embed_dep == 0 || dims.attn_hidden == 0)
      throw std::invalid_argument("config: all dimensions must be positive");
    if (threads == 0) throw std::invalid_argument("config: threads must be positive");
  }
};

// lr * decay^floor(epoch / decay_every), epoch counted from 0.
inline double learning_rate_at(const TrainConfig& cfg, std::size_t epoch) {
  return cfg.lr * std::pow(cfg.lr_decay, static_cast<double>(epoch / cfg.decay_every));
}

struct EpochStats {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double train_acc = 0.0;
  std::optional<double> val_acc;
  double lr = 0.0;
  std::size_t steps = 0;
};

// One pass over `data` in seeded shuffled mini-batches. Gradients are the mean
// over the batch; each example draws fresh Gumbel noise from a stream keyed by
// (seed, epoch, example id).
template <class T>
EpochStats train_epoch(NMTree<T>& model, const std::vector<GroundingExample>& data,
                       const TrainConfig& cfg, std::size_t epoch, double lr, Rng& shuffle_rng) {
  if (data.empty()) throw std::invalid_argument("train_epoch: empty dataset");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  shuffle_rng.shuffle(order);

  EpochStats st;
  st.epoch = epoch;
  st.lr = lr;
  double loss_sum = 0.0;
  std::size_t correct = 0;
  auto& params = model.params();
  for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
    const std::size_t end = std::min(order.size(), start + cfg.batch_size);
    const T inv_n = static_cast<T>(1.0 / static_cast<double>(end - start));
    params.zero_grad();
    for (std::size_t b = start; b < end; ++b) {
      const std::size_t id = order[b];
      const GroundingExample& ex = data[id];
      if (!ex.scene.gt_index) throw std::invalid_argument("train_epoch: example without target");
      Rng noise(mix_seed(cfg.seed, epoch + 1, id + 1));
      Graph<T> g;
      Forward f = model.forward(g, ex, Mode::Train, &noise);
      const double loss = static_cast<double>(g.scalar(f.loss));
      if (!std::isfinite(loss))
        throw std::runtime_error("train_epoch: non-finite loss on example " + std::to_string(id));
      loss_sum += loss;
      auto scores = g.value(f.result.root_scores);
      if (argmax_index(scores.begin(), scores.end()) == *ex.scene.gt_index) ++correct;
      g.backward(g.scale(f.loss, inv_n));
    }
    adam_step(params, lr);
    ++st.steps;
  }
  st.mean_loss = loss_sum / static_cast<double>(data.size());
  st.train_acc = static_cast<double>(correct) / static_cast<double>(data.size());
  return st;
}

// Fraction of examples whose highest-scoring region (lowest index on ties) is
// the target. Inference only, no noise; optionally fans out over threads.
template <class T>
double evaluate_top1(const NMTree<T>& model, const std::vector<GroundingExample>& data,
                     std::size_t threads = 1) {
  if (data.empty()) throw std::invalid_argument("evaluate_top1: empty dataset");
  std::vector<char> hit(data.size(), 0);
  auto work = [&](std::size_t begin, std::size_t stride) {
    for (std::size_t i = begin; i < data.size(); i += stride) {
      if (!data[i].scene.gt_index) throw std::invalid_argument("evaluate_top1: example without target");
      hit[i] = model.predict(data[i]) == *data[i].scene.gt_index;
    }
  };
  threads = std::max<std::size_t>(1, std::min(threads, data.size()));
  if (threads == 1) {
    work(0, 1);
  } else {
    std::vector<std::exception_ptr> errors(threads);
    {
      std::vector<std::jthread> pool;
      for (std::size_t t = 0; t < threads; ++t)
        pool.emplace_back([&, t] {
          try {
            work(t, threads);
          } catch (...) {
            errors[t] = std::current_exception();
          }
        });
    }
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  const auto correct = std::count(hit.begin(), hit.end(), 1);
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

// Full schedule. `on_epoch` sees every epoch's stats (for logging); training
// stops early when validation accuracy fails to improve for
// `early_stop_patience` epochs (if enabled and a validation set is given).
template <class T>
std::vector<EpochStats> train(NMTree<T>& model, const std::vector<GroundingExample>& train_set,
                              const std::vector<GroundingExample>* val_set, const TrainConfig& cfg,
                              const std::function<void(const EpochStats&)>& on_epoch = {},
                              std::size_t first_epoch = 0) {
  cfg.validate();
  std::vector<EpochStats> history;
  Rng shuffle(mix_seed(cfg.seed, 0x5407f1e));
  // Advance the shuffle stream when resuming so epoch e always sees the same order.
  for (std::size_t e = 0; e < first_epoch; ++e) {
    std::vector<std::size_t> dummy(train_set.size());
    shuffle.shuffle(dummy);
  }
  double best = -1.0;
  std::size_t since_best = 0;
  for (std::size_t epoch = first_epoch; epoch < cfg.epochs; ++epoch) {
    EpochStats st = train_epoch(model, train_set, cfg, epoch, learning_rate_at(cfg, epoch), shuffle);
    if (val_set && !val_set->empty()) st.val_acc = evaluate_top1(model, *val_set, cfg.threads);
    history.push_back(st);
    if (on_epoch) on_epoch(st);
    if (cfg.early_stop_patience > 0 && st.val_acc) {
      if (*st.val_acc > best) {
        best = *st.val_acc;
        since_best = 0;
      } else if (++since_best >= cfg.early_stop_patience) {
        break;
      }
    }
  }
  return history;
}

}  // namespace nmtree

#endif  // NMTREE_TRAINING_HPP
