#include "heightnet/loss.hpp"

#include <cmath>

namespace heightnet {

template <typename T>
LossResult<T> l1_loss(const Tensor4<T>& pred, const Tensor4<T>& target) {
  if (pred.shape() != target.shape()) {
    throw ShapeError("l1_loss: shape mismatch " + pred.shape().str() + " vs " + target.shape().str());
  }
  LossResult<T> r{0.0, Tensor4<T>(pred.shape())};
  const double count = static_cast<double>(pred.size());
  const T step = static_cast<T>(1.0 / count);
  double acc = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
    acc += std::abs(d);
    r.grad[i] = d > 0 ? step : (d < 0 ? -step : T{0});
  }
  r.value = acc / count;
  return r;
}

template LossResult<float> l1_loss(const Tensor4<float>&, const Tensor4<float>&);
template LossResult<double> l1_loss(const Tensor4<double>&, const Tensor4<double>&);

}  // namespace heightnet
