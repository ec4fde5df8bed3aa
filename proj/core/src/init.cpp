#include "heightnet/init.hpp"

#include <cmath>
#include <random>

namespace heightnet {

double glorot_stddev(std::size_t fan_in, std::size_t fan_out) {
  if (fan_in == 0 || fan_out == 0) throw ConfigError("glorot_normal_init: zero fan");
  return std::sqrt(2.0 / static_cast<double>(fan_in + fan_out));
}

template <typename T>
Tensor4<T> glorot_normal_init(Shape4 kernel_shape, std::uint64_t seed) {
  const std::size_t receptive = kernel_shape.h * kernel_shape.w;
  const double sigma = glorot_stddev(kernel_shape.c * receptive, kernel_shape.n * receptive);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x9e3779b9u};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> normal(0.0, sigma);
  Tensor4<T> out(kernel_shape);
  for (std::size_t i = 0; i < out.size(); ++i) {
    double v;
    do {
      v = normal(rng);
    } while (std::abs(v) > 2.0 * sigma);
    out[i] = static_cast<T>(v);
  }
  return out;
}

template Tensor4<float> glorot_normal_init(Shape4, std::uint64_t);
template Tensor4<double> glorot_normal_init(Shape4, std::uint64_t);

}  // namespace heightnet
