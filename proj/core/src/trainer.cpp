#include "heightnet/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "heightnet/error.hpp"
#include "heightnet/loss.hpp"
#include "heightnet/weights.hpp"

namespace heightnet {

void TrainRunConfig::validate() const {
  if (max_epochs == 0) throw ConfigError("train: max_epochs must be >= 1");
  if (patience == 0) throw ConfigError("train: patience must be >= 1");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
    throw ConfigError("train: validation_fraction must lie in (0, 1)");
  }
  if (batch_size == 0) throw ConfigError("train: batch_size must be >= 1");
  if (!(optimizer.learning_rate >= 0.0) || !std::isfinite(optimizer.learning_rate)) {
    throw ConfigError("train: learning rate must be finite and >= 0");
  }
}

std::string History::to_tsv() const {
  std::ostringstream out;
  out.precision(9);
  out << "epoch\ttrain_loss\tval_loss\twall_time_s\n";
  for (std::size_t i = 0; i < train_loss.size(); ++i) {
    out << i << '\t' << train_loss[i] << '\t' << val_loss[i] << '\t' << wall_time_s[i] << '\n';
  }
  return out.str();
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_validation(std::size_t n, double fraction,
                                                                               std::uint64_t seed) {
  if (n < 2) throw ConfigError("train: need at least 2 samples to hold out a validation set, got " + std::to_string(n));
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  const auto want = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  const std::size_t n_val = std::clamp<std::size_t>(want, 1, n - 1);
  std::vector<std::size_t> val(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> tr(idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
  std::sort(val.begin(), val.end());
  std::sort(tr.begin(), tr.end());
  return {std::move(tr), std::move(val)};
}

double evaluate_l1(const Network<float>& net, const std::vector<SamplePair>& pairs) {
  if (pairs.empty()) return 0.0;
  double sum = 0;
  for (const SamplePair& p : pairs) sum += l1_loss(net.predict(p.image), p.height).value;
  return sum / static_cast<double>(pairs.size());
}

TrainOutcome train(Network<float>& net, const std::vector<SamplePair>& dataset, const TrainRunConfig& run) {
  run.validate();
  const auto [tr, val] = split_validation(dataset.size(), run.validation_fraction, run.seed);
  std::vector<SamplePair> train_set, val_set;
  for (std::size_t i : tr) train_set.push_back(dataset[i]);
  for (std::size_t i : val) val_set.push_back(dataset[i]);
  return train(net, train_set, val_set, run);
}

namespace {

using Snapshot = std::vector<std::vector<float>>;

Snapshot snapshot(const Network<float>& net) {
  Snapshot s;
  for (const auto& p : net.parameters()) s.emplace_back(p.tensor->values().begin(), p.tensor->values().end());
  return s;
}

void restore(Network<float>& net, const Snapshot& s) {
  auto params = net.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) std::copy(s[i].begin(), s[i].end(), params[i].tensor->values().begin());
}

// Stacks same-shape samples along the batch axis.
Tensor4<float> stack(const std::vector<const Tensor4<float>*>& items) {
  Shape4 s = items.front()->shape();
  s.n = 0;
  for (const auto* t : items) {
    if (t->shape().c != s.c || t->shape().h != s.h || t->shape().w != s.w) {
      throw ShapeError("train: batch members differ in shape; use batch_size 1 for mixed sizes");
    }
    s.n += t->shape().n;
  }
  Tensor4<float> out(s);
  std::size_t at = 0;
  for (const auto* t : items) {
    std::copy(t->values().begin(), t->values().end(), out.values().begin() + static_cast<std::ptrdiff_t>(at));
    at += t->size();
  }
  return out;
}

}  // namespace

TrainOutcome train(Network<float>& net, const std::vector<SamplePair>& train_set,
                   const std::vector<SamplePair>& val_set, const TrainRunConfig& run) {
  run.validate();
  if (train_set.empty()) throw ConfigError("train: empty training set");
  using Clock = std::chrono::steady_clock;
  const auto t0 = Clock::now();

  TrainOutcome out;
  out.optimizer.params = run.optimizer;
  History& h = out.history;
  std::mt19937_64 rng(run.seed ^ 0x9e3779b97f4a7c15ull);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  double best = std::numeric_limits<double>::infinity();
  Snapshot best_params = snapshot(net);
  std::size_t since_best = 0;
  bool out_of_steps = false;

  for (std::size_t epoch = 0; epoch < run.max_epochs && !out_of_steps; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += run.batch_size) {
      if (run.max_steps != 0 && h.steps >= run.max_steps) {
        out_of_steps = true;
        break;
      }
      const std::size_t end = std::min(order.size(), start + run.batch_size);
      std::vector<const Tensor4<float>*> images, heights;
      for (std::size_t i = start; i < end; ++i) {
        images.push_back(&train_set[order[i]].image);
        heights.push_back(&train_set[order[i]].height);
      }
      const Tensor4<float> image = images.size() == 1 ? *images.front() : stack(images);
      const Tensor4<float> target = heights.size() == 1 ? *heights.front() : stack(heights);

      ForwardResult<float> fr = net.forward(image, Mode::train);
      const LossResult<float> loss = l1_loss(fr.height, target);
      if (!std::isfinite(loss.value)) {
        throw DivergenceError("train: non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                              std::to_string(h.steps));
      }
      net.zero_grad();
      net.backward(fr.cache, loss.grad);
      nadam_step(net.parameters(), out.optimizer);
      loss_sum += loss.value;
      ++batches;
      ++h.steps;
    }
    if (batches == 0) break;

    const double train_loss = loss_sum / static_cast<double>(batches);
    const double val_loss = val_set.empty() ? train_loss : evaluate_l1(net, val_set);
    if (!std::isfinite(val_loss)) throw DivergenceError("train: non-finite validation loss at epoch " + std::to_string(epoch));
    h.train_loss.push_back(train_loss);
    h.val_loss.push_back(val_loss);
    h.wall_time_s.push_back(std::chrono::duration<double>(Clock::now() - t0).count());

    if (val_loss < best) {
      best = val_loss;
      h.best_epoch = h.epochs() - 1;
      best_params = snapshot(net);
      since_best = 0;
    } else {
      ++since_best;
    }
    if (!run.checkpoint.empty()) save_weights(net, run.checkpoint, &out.optimizer);
    if (run.on_epoch) run.on_epoch(EpochRecord{h.epochs() - 1, train_loss, val_loss, h.wall_time_s.back(), h.steps});
    if (since_best >= run.patience) {
      h.stopped_early = true;
      break;
    }
  }

  restore(net, best_params);
  return out;
}

}  // namespace heightnet
