#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "heightnet/error.hpp"

namespace heightnet {

/// Extent of a rank-4 (batch, channels, rows, cols) array.
struct Shape4 {
  std::size_t n = 1;
  std::size_t c = 1;
  std::size_t h = 1;
  std::size_t w = 1;

  constexpr std::size_t count() const noexcept { return n * c * h * w; }
  constexpr std::size_t plane() const noexcept { return h * w; }
  constexpr bool valid() const noexcept { return n >= 1 && c >= 1 && h >= 1 && w >= 1; }

  friend constexpr bool operator==(const Shape4&, const Shape4&) = default;

  std::string str() const;
};

/// Dense rank-4 array in row-major (n, c, h, w) order with an optional
/// same-shape gradient buffer.
///
/// The gradient slot is empty until `zero_grad()` or `grad()` allocates it.
/// Parameters accumulate reverse-mode partials there; activations flowing
/// through the network usually never touch it.
template <typename T>
class Tensor4 {
 public:
  using value_type = T;

  Tensor4() : shape_{}, data_(1, T{0}) {}

  explicit Tensor4(Shape4 shape, T fill = T{0}) : shape_(checked(shape)), data_(shape.count(), fill) {}

  Tensor4(Shape4 shape, std::vector<T> values) : shape_(checked(shape)), data_(std::move(values)) {
    if (data_.size() != shape_.count()) {
      throw ShapeError("Tensor4: " + std::to_string(data_.size()) + " values for shape " + shape_.str());
    }
  }

  static Tensor4 zeros_like(const Tensor4& other) { return Tensor4(other.shape()); }

  const Shape4& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return data_.size(); }

  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }

  std::size_t offset(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const noexcept {
    return ((n * shape_.c + c) * shape_.h + y) * shape_.w + x;
  }
  T& at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) noexcept { return data_[offset(n, c, y, x)]; }
  T at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const noexcept {
    return data_[offset(n, c, y, x)];
  }
  T& operator[](std::size_t i) noexcept { return data_[i]; }
  T operator[](std::size_t i) const noexcept { return data_[i]; }

  /// One (n, c) feature map.
  std::span<T> plane(std::size_t n, std::size_t c) noexcept {
    return std::span<T>(data_).subspan(offset(n, c, 0, 0), shape_.plane());
  }
  std::span<const T> plane(std::size_t n, std::size_t c) const noexcept {
    return std::span<const T>(data_).subspan(offset(n, c, 0, 0), shape_.plane());
  }

  void fill(T v) noexcept { std::fill(data_.begin(), data_.end(), v); }

  bool has_grad() const noexcept { return !grad_.empty(); }
  std::span<T> grad() {
    if (grad_.empty()) grad_.assign(data_.size(), T{0});
    return grad_;
  }
  std::span<const T> grad() const noexcept { return grad_; }
  void zero_grad() { grad_.assign(data_.size(), T{0}); }
  void drop_grad() noexcept {
    grad_.clear();
    grad_.shrink_to_fit();
  }

  bool all_finite() const noexcept {
    for (T v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  template <typename U>
  Tensor4<U> cast() const {
    std::vector<U> out(data_.size());
    for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
    return Tensor4<U>(shape_, std::move(out));
  }

  /// Values only; the gradient slot does not participate in equality.
  friend bool operator==(const Tensor4& a, const Tensor4& b) { return a.shape_ == b.shape_ && a.data_ == b.data_; }

 private:
  static Shape4 checked(Shape4 s) {
    if (!s.valid()) throw ShapeError("Tensor4: every extent must be >= 1, got " + s.str());
    return s;
  }

  Shape4 shape_;
  std::vector<T> data_;
  std::vector<T> grad_;
};

/// Throws NonFiniteError naming `what` when any value is NaN or infinite.
template <typename T>
void require_finite(const Tensor4<T>& t, const char* what) {
  if (!t.all_finite()) throw NonFiniteError(std::string(what) + ": non-finite value in tensor " + t.shape().str());
}

/// Convolution weights (c_out, c_in, k_h, k_w) with one bias per output channel.
template <typename T>
struct KernelBank {
  Tensor4<T> weights;
  Tensor4<T> bias;  // (c_out, 1, 1, 1)

  KernelBank() = default;
  KernelBank(std::size_t c_out, std::size_t c_in, std::size_t kh, std::size_t kw)
      : weights(Shape4{c_out, c_in, kh, kw}), bias(Shape4{c_out, 1, 1, 1}) {}

  std::size_t c_out() const noexcept { return weights.shape().n; }
  std::size_t c_in() const noexcept { return weights.shape().c; }
  std::size_t kh() const noexcept { return weights.shape().h; }
  std::size_t kw() const noexcept { return weights.shape().w; }
  std::size_t parameter_count() const noexcept { return weights.size() + bias.size(); }
};

/// Argmax bookkeeping of a 2x2/stride-2 max-pool.
///
/// `offsets[i]` is the flat (row * in_w + col) position of the maximum inside
/// the input feature map that produced pooled element `i`; `shape` is the
/// pooled output shape.
struct PoolIndices {
  Shape4 shape;
  std::size_t in_h = 0;
  std::size_t in_w = 0;
  std::vector<std::uint32_t> offsets;

  friend bool operator==(const PoolIndices&, const PoolIndices&) = default;
};

enum class Mode { train, infer };

/// Per-channel affine normalization parameters and running statistics.
template <typename T>
struct BatchNormState {
  Tensor4<T> gamma;         // trainable
  Tensor4<T> beta;          // trainable
  Tensor4<T> running_mean;  // non-trainable
  Tensor4<T> running_var;   // non-trainable
  double momentum = 0.1;    // weight of the current batch in the running average
  double epsilon = 1e-5;

  BatchNormState() = default;
  explicit BatchNormState(std::size_t channels)
      : gamma(Shape4{channels, 1, 1, 1}, T{1}),
        beta(Shape4{channels, 1, 1, 1}, T{0}),
        running_mean(Shape4{channels, 1, 1, 1}, T{0}),
        running_var(Shape4{channels, 1, 1, 1}, T{1}) {}

  std::size_t channels() const noexcept { return gamma.size(); }
};

}  // namespace heightnet
