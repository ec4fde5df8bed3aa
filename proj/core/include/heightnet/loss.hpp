#pragma once

#include "heightnet/tensor.hpp"

namespace heightnet {

template <typename T>
struct LossResult {
  double value = 0;
  Tensor4<T> grad;
};

/// Mean absolute error and its subgradient sign(pred - target) / count, with
/// sign(0) = 0.
template <typename T>
LossResult<T> l1_loss(const Tensor4<T>& pred, const Tensor4<T>& target);

}  // namespace heightnet
