#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "heightnet/dataset.hpp"
#include "heightnet/nadam.hpp"
#include "heightnet/network.hpp"

namespace heightnet {

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0;
  double val_loss = 0;
  double wall_time_s = 0;
  std::size_t steps = 0;  // optimizer steps so far
};

struct TrainRunConfig {
  std::size_t max_epochs = 100;
  std::size_t patience = 10;           // epochs without validation improvement
  double validation_fraction = 0.1;
  std::size_t batch_size = 1;
  std::uint64_t seed = 42;
  std::size_t max_steps = 0;           // 0 = unlimited; stops mid-epoch
  NadamParams optimizer;
  std::filesystem::path checkpoint;    // empty = none; rewritten after every epoch
  std::function<void(const EpochRecord&)> on_epoch;

  /// Throws ConfigError if a field is out of range.
  void validate() const;
};

/// Per-epoch losses. The training loss is the mean train-mode L1 of the
/// steps in that epoch (measured before each update); the validation loss is
/// the infer-mode L1 after the epoch. Without a validation set the training
/// loss is monitored instead.
struct History {
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  std::vector<double> wall_time_s;
  std::size_t best_epoch = 0;
  std::size_t steps = 0;
  bool stopped_early = false;

  std::size_t epochs() const noexcept { return train_loss.size(); }
  /// Tab-separated: epoch, train_loss, val_loss, wall_time_s.
  std::string to_tsv() const;
};

struct TrainOutcome {
  History history;
  OptimizerState optimizer;
};

/// Seeded uniform split; returns (train indices, validation indices). At
/// least one sample lands on each side, so n must be >= 2.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_validation(std::size_t n, double fraction,
                                                                               std::uint64_t seed);

/// Mean infer-mode L1 over the pairs.
double evaluate_l1(const Network<float>& net, const std::vector<SamplePair>& pairs);

/// Splits `dataset` with split_validation() and trains on the larger part.
TrainOutcome train(Network<float>& net, const std::vector<SamplePair>& dataset, const TrainRunConfig& run);

/// Explicit split; `val` may be empty. On return `net` holds the parameters
/// (and running statistics) of the best monitored epoch.
TrainOutcome train(Network<float>& net, const std::vector<SamplePair>& train_set,
                   const std::vector<SamplePair>& val_set, const TrainRunConfig& run);

}  // namespace heightnet
