#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "heightnet/network.hpp"

namespace heightnet {

struct NadamParams {
  double learning_rate = 2e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double schedule_decay = 0.004;
};

/// Moments for one parameter tensor, kept in double regardless of the
/// parameter precision.
struct MomentSlot {
  std::vector<double> m;
  std::vector<double> v;
};

struct OptimizerState {
  NadamParams params;
  std::uint64_t t = 0;
  double m_schedule = 1.0;  // running product of mu_1..mu_t
  std::map<std::string, MomentSlot> slots;
};

/// mu_t = beta1 * (1 - 0.5 * 0.96^(t * schedule_decay))
double nadam_momentum(const NadamParams& p, std::uint64_t t) noexcept;

/// Scalars shared by every parameter in one step.
struct NadamCoefficients {
  double learning_rate = 0;
  double beta1 = 0, beta2 = 0, epsilon = 0;
  double mu_t = 0, mu_next = 0;
  double m_schedule_new = 0;   // prod mu_1..mu_t
  double m_schedule_next = 0;  // prod mu_1..mu_{t+1}
  double v_correction = 0;     // 1 - beta2^t
};

/// Advances t and the momentum-schedule product; returns this step's scalars.
NadamCoefficients nadam_begin_step(OptimizerState& state);

/// Per-element update:
///   g'  = g / (1 - m_schedule_new)
///   m   = beta1 m + (1 - beta1) g,      m' = m / (1 - m_schedule_next)
///   v   = beta2 v + (1 - beta2) g^2,    v' = v / (1 - beta2^t)
///   x  -= lr * ((1 - mu_t) g' + mu_next m') / (sqrt(v') + epsilon)
template <typename T>
void nadam_apply(std::span<T> x, std::span<const T> grad, MomentSlot& slot, const NadamCoefficients& k);

/// One step over every trainable parameter, reading gradients from their
/// slots (an absent slot counts as zero). Throws NonFiniteError before
/// touching anything if a gradient is not finite.
template <typename T>
void nadam_step(const std::vector<ParameterRef<T>>& params, OptimizerState& state);

}  // namespace heightnet
