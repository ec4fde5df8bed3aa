#include "heightnet/tensor.hpp"

namespace heightnet {

std::string Shape4::str() const {
  return "(" + std::to_string(n) + ", " + std::to_string(c) + ", " + std::to_string(h) + ", " + std::to_string(w) +
         ")";
}

template class Tensor4<float>;
template class Tensor4<double>;

}  // namespace heightnet
