#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "heightnet/network_config.hpp"

namespace heightnet {

struct GradCheckOptions {
  double step = 1e-4;       // central-difference step
  double tolerance = 1e-4;  // max accepted relative error
  /// Denominator floor of the relative error; partials smaller than this are
  /// compared absolutely.
  double floor = 1e-6;
  /// Coordinates whose +/- step crosses a ReLU kink or flips a pooling
  /// argmax are not differentiable there and are skipped; more than this
  /// fraction of skips fails the check.
  double max_skip_fraction = 0.05;
  /// 0 checks every coordinate; otherwise a seeded sample of at most this
  /// many coordinates per tensor.
  std::size_t max_coordinates_per_tensor = 0;
  std::size_t trials = 20;  // random tensors per primitive
  std::uint64_t seed = 1234;
};

struct GradCheckResult {
  std::string name;
  double max_relative_error = 0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
  bool passed = true;
};

struct GradCheckSummary {
  std::vector<GradCheckResult> results;
  double max_relative_error = 0;
  bool passed = true;

  void add(GradCheckResult r);
};

/// |a - n| / max(|a|, |n|, floor)
double relative_error(double analytic, double numeric, double floor) noexcept;

/// Objective value plus a fingerprint of every piecewise-linear decision made
/// while computing it (ReLU signs, pooling argmaxes).
struct Evaluation {
  double value = 0;
  std::uint64_t signature = 0;
};
using Evaluator = std::function<Evaluation()>;

/// Perturbs `x` in place one coordinate at a time, re-evaluating through
/// `eval`, and compares central differences against `analytic`.
GradCheckResult finite_difference_check(const std::string& name, std::span<double> x,
                                        std::span<const double> analytic, const Evaluator& eval,
                                        const GradCheckOptions& options);

/// Every differentiable primitive over `options.trials` random small tensors.
GradCheckSummary check_primitives(const GradCheckOptions& options);

/// Whole network (double precision, train mode) against a random linear
/// functional of its output; one result per parameter tensor plus the input.
GradCheckSummary check_network(const NetworkConfig& config, const GradCheckOptions& options,
                               std::size_t spatial = 0);

}  // namespace heightnet
