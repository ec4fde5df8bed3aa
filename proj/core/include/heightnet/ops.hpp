#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "heightnet/tensor.hpp"

// Differentiable tensor primitives. Every forward op has a matching
// `*_backward` that returns exact reverse-mode partials. All functions are
// instantiated for float and double.

namespace heightnet {

// ---------------------------------------------------------------------------
// Convolution (cross-correlation with zero padding)

template <typename T>
Tensor4<T> conv2d(const Tensor4<T>& input, const KernelBank<T>& kernels, std::size_t pad = 1, std::size_t stride = 1);

template <typename T>
struct ConvGrads {
  Tensor4<T> input;
  Tensor4<T> weights;
  Tensor4<T> bias;
};

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor4<T>& input, const KernelBank<T>& kernels, const Tensor4<T>& grad_out,
                             std::size_t pad = 1, std::size_t stride = 1);

// ---------------------------------------------------------------------------
// Pooling and unpooling

template <typename T>
struct PoolResult {
  Tensor4<T> output;
  PoolIndices indices;
};

/// 2x2 windows, stride 2. Ties resolve to the first element in row-major
/// window order.
template <typename T>
PoolResult<T> max_pool_2x2(const Tensor4<T>& input);

/// Routes each pooled gradient back to its recorded argmax.
template <typename T>
Tensor4<T> max_pool_2x2_backward(const Tensor4<T>& grad_out, const PoolIndices& indices);

/// Places each input value at its recorded argmax inside an (out_h, out_w)
/// map; every other position is zero.
template <typename T>
Tensor4<T> unpool_indices(const Tensor4<T>& input, const PoolIndices& indices, std::size_t out_h, std::size_t out_w);

template <typename T>
Tensor4<T> unpool_indices_backward(const Tensor4<T>& grad_out, const PoolIndices& indices);

/// Expands each entry into an s x s block holding the value at its top-left
/// corner and zeros elsewhere.
template <typename T>
Tensor4<T> unpool_zero_fill(const Tensor4<T>& input, std::size_t s);

template <typename T>
Tensor4<T> unpool_zero_fill_backward(const Tensor4<T>& grad_out, std::size_t s);

// ---------------------------------------------------------------------------
// Elementwise and structural

template <typename T>
Tensor4<T> relu(const Tensor4<T>& input);

/// `input` is the forward input; the kink at zero takes the zero branch.
template <typename T>
Tensor4<T> relu_backward(const Tensor4<T>& input, const Tensor4<T>& grad_out);

template <typename T>
Tensor4<T> add(const Tensor4<T>& a, const Tensor4<T>& b);

/// Channel concatenation with `a`'s channels first.
template <typename T>
Tensor4<T> concat_channels(const Tensor4<T>& a, const Tensor4<T>& b);

/// Inverse of concat_channels: the first `channels_a` channels and the rest.
template <typename T>
std::pair<Tensor4<T>, Tensor4<T>> split_channels(const Tensor4<T>& t, std::size_t channels_a);

// ---------------------------------------------------------------------------
// Batch normalization

template <typename T>
struct BatchNormCache {
  Mode mode = Mode::infer;
  Tensor4<T> normalized;          // x_hat
  std::vector<double> inv_std;    // per channel
  std::vector<double> batch_mean; // train mode only
  std::vector<double> batch_var;  // train mode only, biased
};

/// Train mode normalizes with batch statistics over (n, h, w) and folds them
/// into the running averages of `state`; infer mode uses the running
/// statistics. Output is gamma * x_hat + beta.
template <typename T>
Tensor4<T> batch_norm(const Tensor4<T>& input, BatchNormState<T>& state, Mode mode,
                      BatchNormCache<T>* cache = nullptr);

/// Same output as batch_norm but leaves `state` untouched. In train mode the
/// batch statistics land in `cache` for a later update_running_stats().
template <typename T>
Tensor4<T> batch_norm_apply(const Tensor4<T>& input, const BatchNormState<T>& state, Mode mode,
                            BatchNormCache<T>* cache = nullptr);

/// Exponential moving average of the batch statistics recorded in `cache`.
template <typename T>
void update_running_stats(BatchNormState<T>& state, const BatchNormCache<T>& cache);

template <typename T>
struct BatchNormGrads {
  Tensor4<T> input;
  Tensor4<T> gamma;
  Tensor4<T> beta;
};

template <typename T>
BatchNormGrads<T> batch_norm_backward(const BatchNormCache<T>& cache, const BatchNormState<T>& state,
                                      const Tensor4<T>& grad_out);

}  // namespace heightnet
