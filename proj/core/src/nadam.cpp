#include "heightnet/nadam.hpp"

#include <cmath>
#include <utility>

#include "heightnet/error.hpp"

namespace heightnet {

double nadam_momentum(const NadamParams& p, std::uint64_t t) noexcept {
  return p.beta1 * (1.0 - 0.5 * std::pow(0.96, static_cast<double>(t) * p.schedule_decay));
}

NadamCoefficients nadam_begin_step(OptimizerState& state) {
  const NadamParams& p = state.params;
  state.t += 1;
  NadamCoefficients k;
  k.learning_rate = p.learning_rate;
  k.beta1 = p.beta1;
  k.beta2 = p.beta2;
  k.epsilon = p.epsilon;
  k.mu_t = nadam_momentum(p, state.t);
  k.mu_next = nadam_momentum(p, state.t + 1);
  k.m_schedule_new = state.m_schedule * k.mu_t;
  k.m_schedule_next = k.m_schedule_new * k.mu_next;
  k.v_correction = 1.0 - std::pow(p.beta2, static_cast<double>(state.t));
  state.m_schedule = k.m_schedule_new;
  return k;
}

template <typename T>
void nadam_apply(std::span<T> x, std::span<const T> grad, MomentSlot& slot, const NadamCoefficients& k) {
  if (grad.size() != x.size() && !grad.empty()) throw ShapeError("nadam_apply: gradient size mismatch");
  if (slot.m.size() != x.size()) {
    slot.m.assign(x.size(), 0.0);
    slot.v.assign(x.size(), 0.0);
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double g = grad.empty() ? 0.0 : static_cast<double>(grad[i]);
    const double g_prime = g / (1.0 - k.m_schedule_new);
    slot.m[i] = k.beta1 * slot.m[i] + (1.0 - k.beta1) * g;
    const double m_prime = slot.m[i] / (1.0 - k.m_schedule_next);
    slot.v[i] = k.beta2 * slot.v[i] + (1.0 - k.beta2) * g * g;
    const double v_prime = slot.v[i] / k.v_correction;
    const double m_bar = (1.0 - k.mu_t) * g_prime + k.mu_next * m_prime;
    x[i] = static_cast<T>(static_cast<double>(x[i]) - k.learning_rate * m_bar / (std::sqrt(v_prime) + k.epsilon));
  }
}

template <typename T>
void nadam_step(const std::vector<ParameterRef<T>>& params, OptimizerState& state) {
  for (const auto& p : params) {
    if (!p.trainable || !p.tensor->has_grad()) continue;
    for (T g : std::as_const(*p.tensor).grad()) {
      if (!std::isfinite(static_cast<double>(g))) throw NonFiniteError("nadam_step: non-finite gradient in " + p.name);
    }
  }
  const NadamCoefficients k = nadam_begin_step(state);
  for (const auto& p : params) {
    if (!p.trainable) continue;
    std::span<const T> g = p.tensor->has_grad() ? std::as_const(*p.tensor).grad() : std::span<const T>{};
    nadam_apply<T>(p.tensor->values(), g, state.slots[p.name], k);
  }
}

template void nadam_apply<float>(std::span<float>, std::span<const float>, MomentSlot&, const NadamCoefficients&);
template void nadam_apply<double>(std::span<double>, std::span<const double>, MomentSlot&, const NadamCoefficients&);
template void nadam_step<float>(const std::vector<ParameterRef<float>>&, OptimizerState&);
template void nadam_step<double>(const std::vector<ParameterRef<double>>&, OptimizerState&);

}  // namespace heightnet
