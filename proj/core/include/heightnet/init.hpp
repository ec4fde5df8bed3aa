#pragma once

#include <cstddef>
#include <cstdint>

#include "heightnet/tensor.hpp"

namespace heightnet {

/// sqrt(2 / (fan_in + fan_out)); throws ConfigError on a zero fan.
double glorot_stddev(std::size_t fan_in, std::size_t fan_out);

/// Zero-mean normal samples with the Glorot standard deviation, redrawn until
/// they fall within two standard deviations. For a kernel shape
/// (c_out, c_in, k_h, k_w): fan_in = c_in*k_h*k_w, fan_out = c_out*k_h*k_w.
/// Deterministic for a given seed.
template <typename T>
Tensor4<T> glorot_normal_init(Shape4 kernel_shape, std::uint64_t seed);

}  // namespace heightnet
