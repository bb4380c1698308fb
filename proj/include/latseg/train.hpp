#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iterator>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "latseg/adamax.hpp"
#include "latseg/error.hpp"
#include "latseg/latent_ode.hpp"
#include "latseg/parallel.hpp"
#include "latseg/rng.hpp"
#include "latseg/trajectory.hpp"

namespace latseg {

struct AugmentConfig {
  bool subsample = true;
  bool truncate = true;
  std::size_t min_points = 30;  // neither augmentation goes below this many points
};

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 256;
  double learning_rate = 0.01;
  double lr_decay = 0.1;
  std::size_t lr_patience = 10;  // epochs without validation improvement
  double min_learning_rate = 1e-4;
  std::size_t kl_anneal_epochs = 10;
  std::size_t samples = 1;  // z0 draws per trajectory
  double clip_norm = 2.0;
  AugmentConfig augment;
  std::uint64_t seed = 0;
  std::size_t threads = 1;

  void validate() const {
    require(batch_size >= 1, "train: batch_size must be >= 1");
    require(learning_rate > 0, "train: learning_rate must be positive");
    require(lr_decay > 0 && lr_decay <= 1, "train: lr_decay must be in (0, 1]");
    require(min_learning_rate > 0, "train: min_learning_rate must be positive");
    require(samples >= 1, "train: samples must be >= 1");
    require(clip_norm > 0, "train: clip_norm must be positive");
    require(augment.min_points >= 1, "train: augment.min_points must be >= 1");
  }
};

/// KL weight rising linearly from 0 at epoch 0 to 1 at `anneal_epochs`.
inline double kl_weight(std::size_t epoch, std::size_t anneal_epochs) {
  if (anneal_epochs == 0) return 1.0;
  return std::min(1.0, static_cast<double>(epoch) / static_cast<double>(anneal_epochs));
}

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;  // mean -ELBO at the epoch's KL weight
  double val_loss = 0.0;    // mean -ELBO at KL weight 1, no augmentation
  double kl_weight = 0.0;
  double learning_rate = 0.0;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_val_loss = std::numeric_limits<double>::infinity();
};

/// Start-truncation then sub-sampling; the result is re-based to t = 0.
inline Series augment(const Series& s, const AugmentConfig& cfg, Rng& rng) {
  const std::size_t n = s.size();
  const std::size_t floor = std::min(cfg.min_points, n);
  std::size_t begin = 0;
  if (cfg.truncate && n > floor) begin = std::uniform_int_distribution<std::size_t>(0, n - floor)(rng);
  std::vector<std::size_t> idx(n - begin);
  std::iota(idx.begin(), idx.end(), begin);
  if (cfg.subsample && idx.size() > floor) {
    const std::size_t keep = std::uniform_int_distribution<std::size_t>(floor, idx.size())(rng);
    std::vector<std::size_t> chosen;
    chosen.reserve(keep);
    std::sample(idx.begin(), idx.end(), std::back_inserter(chosen), keep, rng);
    idx = std::move(chosen);
  }
  return s.select(idx).rebased();
}

struct LossAndGrad {
  double loss = 0.0;
  std::vector<Tensor> grads;
};

inline LossAndGrad negative_elbo_gradient(const LatentOdeModel& model, const Series& s, double kl_w, Rng& rng,
                                          std::size_t samples) {
  Tape tape;
  const BoundModel b = bind(model, &tape);
  const Var loss = ad::neg(elbo_terms(b, s.values, s.times, kl_w, rng, samples).elbo);
  const Gradients g = tape.backward(loss);
  LossAndGrad out;
  out.loss = loss.value()[0];
  out.grads.reserve(b.leaves.size());
  for (const Var& leaf : b.leaves) out.grads.push_back(g.of(leaf));
  return out;
}

/// Mean -ELBO at KL weight 1 with per-trajectory seeds derived from `seed`.
inline double evaluate_negative_elbo(const LatentOdeModel& model, const std::vector<Series>& data, std::uint64_t seed,
                                     std::size_t samples, std::size_t threads) {
  if (data.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::vector<double> losses(data.size());
  parallel_for(data.size(), threads, [&](std::size_t i) {
    Rng rng(derive_seed(seed, {i}));
    losses[i] = -elbo(model, data[i].values, data[i].times, 1.0, rng, samples);
  });
  double total = 0.0;
  for (double l : losses) total += l;
  return total / static_cast<double>(data.size());
}

using EpochCallback = std::function<void(const EpochRecord&, const LatentOdeModel&, bool is_best)>;

/// Trains in place. On return the model holds the parameters of the epoch with
/// the lowest validation loss (training loss when `val` is empty).
inline TrainResult train(LatentOdeModel& model, const std::vector<Series>& train_set, const std::vector<Series>& val,
                         const TrainConfig& cfg, const EpochCallback& on_epoch = {}) {
  cfg.validate();
  TrainResult result;
  if (cfg.epochs == 0) return result;
  require(!train_set.empty(), "train: empty training set");
  for (const Series& s : train_set) s.validate();

  AdamaxState opt;
  opt.learning_rate = cfg.learning_rate;
  LatentOdeModel best = model;
  std::size_t stale = 0;
  Rng shuffle_rng(derive_seed(cfg.seed, {0x5f}));
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double w = kl_weight(epoch, cfg.kl_anneal_epochs);
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0.0;
    const std::size_t batches = (order.size() + cfg.batch_size - 1) / cfg.batch_size;
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t lo = b * cfg.batch_size, hi = std::min(order.size(), lo + cfg.batch_size);
      std::vector<LossAndGrad> parts(hi - lo);
      parallel_for(hi - lo, cfg.threads, [&](std::size_t k) {
        const std::size_t i = order[lo + k];
        Rng rng(derive_seed(cfg.seed, {1, epoch, i}));
        const Series s = augment(train_set[i], cfg.augment, rng);
        parts[k] = negative_elbo_gradient(model, s, w, rng, cfg.samples);
      });
      double batch_loss = 0.0;
      std::vector<Tensor> grads = std::move(parts[0].grads);
      batch_loss += parts[0].loss;
      for (std::size_t k = 1; k < parts.size(); ++k) {
        batch_loss += parts[k].loss;
        for (std::size_t p = 0; p < grads.size(); ++p) grads[p] += parts[k].grads[p];
      }
      if (!std::isfinite(batch_loss)) {
        throw NumericalError("train: non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(b));
      }
      const double scale = 1.0 / static_cast<double>(parts.size());
      for (Tensor& g : grads) g *= scale;
      clip_grad_norm(grads, cfg.clip_norm);
      const std::vector<NamedTensor> params = model.named_parameters();
      try {
        adamax_step(opt, params, grads);
      } catch (const NumericalError& e) {
        throw NumericalError("train: epoch " + std::to_string(epoch) + ", batch " + std::to_string(b) + ": " + e.what());
      }
      epoch_loss += batch_loss;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = epoch_loss / static_cast<double>(order.size());
    rec.kl_weight = w;
    rec.learning_rate = opt.learning_rate;
    rec.val_loss = val.empty() ? rec.train_loss
                               : evaluate_negative_elbo(model, val, derive_seed(cfg.seed, {2}), cfg.samples, cfg.threads);
    if (!std::isfinite(rec.val_loss)) throw NumericalError("train: non-finite validation loss at epoch " + std::to_string(epoch));
    result.history.push_back(rec);

    const bool improved = rec.val_loss < result.best_val_loss;
    if (improved) {
      result.best_val_loss = rec.val_loss;
      result.best_epoch = epoch;
      best = model;
      stale = 0;
    } else if (++stale >= cfg.lr_patience) {
      opt.learning_rate = std::max(cfg.min_learning_rate, opt.learning_rate * cfg.lr_decay);
      stale = 0;
    }
    if (on_epoch) on_epoch(rec, model, improved);
  }
  model = std::move(best);
  return result;
}

}  // namespace latseg
