#include "heightnet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>

#include <Eigen/Core>

#include "heightnet/parallel.hpp"


namespace heightnet {

namespace {

using Index = std::ptrdiff_t;

template <typename T>
T sum(std::span<const T> v) {
  T acc[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= v.size(); i += 8) {
    for (int j = 0; j < 8; ++j) acc[j] += v[i + j];
  }
  T tail = 0;
  for (; i < v.size(); ++i) tail += v[i];
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail;
}

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapC = Eigen::Map<const RowMatrix<T>>;
template <typename T>
using MapM = Eigen::Map<RowMatrix<T>>;

// Eigen would otherwise size its OpenMP team to the machine.
void apply_thread_setting() {
  static const bool once = (set_num_threads(num_threads()), true);
  (void)once;
}

// Dense row-major products on contiguous buffers. a: (m, k), b: (k, n), c: (m, n).
template <typename T>
void gemm_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  apply_thread_setting();
  MapM<T>(c, m, n).noalias() += MapC<T>(a, m, k) * MapC<T>(b, k, n);
}

// c (m, k) += a (m, n) * b (k, n)^T
template <typename T>
void gemm_acc_bt(const T* a, const T* b, T* c, std::size_t m, std::size_t n, std::size_t k) {
  apply_thread_setting();
  MapM<T>(c, m, k).noalias() += MapC<T>(a, m, n) * MapC<T>(b, k, n).transpose();
}

// c (k, n) = a (m, k)^T * b (m, n)
template <typename T>
void gemm_at(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  apply_thread_setting();
  MapM<T>(c, k, n).noalias() = MapC<T>(a, m, k).transpose() * MapC<T>(b, m, n);
}

// Output columns ox in [lo, hi) read input column ox*stride + kx - pad inside [0, in_w).
struct ColumnRange {
  Index lo;
  Index hi;
};

ColumnRange valid_columns(Index out_w, Index in_w, Index kx, Index pad, Index stride) {
  Index lo = 0;
  while (lo < out_w && lo * stride + kx - pad < 0) ++lo;
  Index hi = out_w;
  while (hi > lo && (hi - 1) * stride + kx - pad >= in_w) --hi;
  return {lo, hi};
}

std::size_t conv_out_extent(std::size_t in, std::size_t k, std::size_t pad, std::size_t stride) {
  if (in + 2 * pad < k) {
    throw ShapeError("conv2d: kernel extent " + std::to_string(k) + " exceeds padded input " +
                     std::to_string(in + 2 * pad));
  }
  return (in + 2 * pad - k) / stride + 1;
}

void check_same_shape(const Shape4& a, const Shape4& b, const char* op) {
  if (a != b) throw ShapeError(std::string(op) + ": shape mismatch " + a.str() + " vs " + b.str());
}

// Patch matrix of one image: row (ci, ky, kx), column (oy, ox); zero where
// the kernel reads padding.
template <typename T>
void im2col(const T* src, std::size_t c, std::size_t h, std::size_t w, std::size_t kh, std::size_t kw,
            std::size_t oh, std::size_t ow, Index pad, Index stride, T* col) {
  for (std::size_t ci = 0; ci < c; ++ci) {
    const T* plane = src + ci * h * w;
    for (std::size_t ky = 0; ky < kh; ++ky) {
      for (std::size_t kx = 0; kx < kw; ++kx) {
        T* row = col + ((ci * kh + ky) * kw + kx) * oh * ow;
        const ColumnRange cols =
            valid_columns(static_cast<Index>(ow), static_cast<Index>(w), static_cast<Index>(kx), pad, stride);
        for (std::size_t oy = 0; oy < oh; ++oy) {
          T* dst = row + oy * ow;
          const Index iy = static_cast<Index>(oy) * stride + static_cast<Index>(ky) - pad;
          if (iy < 0 || iy >= static_cast<Index>(h)) {
            std::fill(dst, dst + ow, T{0});
            continue;
          }
          const T* srow = plane + iy * static_cast<Index>(w) + static_cast<Index>(kx) - pad;
          std::fill(dst, dst + cols.lo, T{0});
          for (Index ox = cols.lo; ox < cols.hi; ++ox) dst[ox] = srow[ox * stride];
          std::fill(dst + cols.hi, dst + ow, T{0});
        }
      }
    }
  }
}

// Adjoint of im2col: accumulates patch-matrix entries back onto the image.
template <typename T>
void col2im(const T* col, std::size_t c, std::size_t h, std::size_t w, std::size_t kh, std::size_t kw,
            std::size_t oh, std::size_t ow, Index pad, Index stride, T* dst) {
  for (std::size_t ci = 0; ci < c; ++ci) {
    T* plane = dst + ci * h * w;
    for (std::size_t ky = 0; ky < kh; ++ky) {
      for (std::size_t kx = 0; kx < kw; ++kx) {
        const T* row = col + ((ci * kh + ky) * kw + kx) * oh * ow;
        const ColumnRange cols =
            valid_columns(static_cast<Index>(ow), static_cast<Index>(w), static_cast<Index>(kx), pad, stride);
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const Index iy = static_cast<Index>(oy) * stride + static_cast<Index>(ky) - pad;
          if (iy < 0 || iy >= static_cast<Index>(h)) continue;
          T* drow = plane + iy * static_cast<Index>(w) + static_cast<Index>(kx) - pad;
          const T* srow = row + oy * ow;
          for (Index ox = cols.lo; ox < cols.hi; ++ox) drow[ox * stride] += srow[ox];
        }
      }
    }
  }
}

bool is_pointwise(std::size_t kh, std::size_t kw, std::size_t pad, std::size_t stride) {
  return kh == 1 && kw == 1 && pad == 0 && stride == 1;
}

}  // namespace

// ---------------------------------------------------------------------------

template <typename T>
Tensor4<T> conv2d(const Tensor4<T>& input, const KernelBank<T>& kernels, std::size_t pad, std::size_t stride) {
  const Shape4 is = input.shape();
  if (stride < 1) throw ShapeError("conv2d: stride must be >= 1");
  if (is.c != kernels.c_in()) {
    throw ShapeError("conv2d: input has " + std::to_string(is.c) + " channels, kernels expect " +
                     std::to_string(kernels.c_in()));
  }
  if (kernels.bias.size() != kernels.c_out()) throw ShapeError("conv2d: bias length does not match c_out");
  require_finite(input, "conv2d input");
  require_finite(kernels.weights, "conv2d weights");
  require_finite(kernels.bias, "conv2d bias");

  const std::size_t kh = kernels.kh(), kw = kernels.kw();
  const std::size_t oh = conv_out_extent(is.h, kh, pad, stride);
  const std::size_t ow = conv_out_extent(is.w, kw, pad, stride);
  const std::size_t c_out = kernels.c_out();
  const std::size_t patch = is.c * kh * kw, pixels = oh * ow;
  Tensor4<T> out(Shape4{is.n, c_out, oh, ow});

  const bool pointwise = is_pointwise(kh, kw, pad, stride);
  std::vector<T> col(pointwise ? 0 : patch * pixels);
  for (std::size_t n = 0; n < is.n; ++n) {
    const T* src = input.plane(n, 0).data();
    if (!pointwise) {
      im2col(src, is.c, is.h, is.w, kh, kw, oh, ow, static_cast<Index>(pad), static_cast<Index>(stride), col.data());
      src = col.data();
    }
    T* dst = out.plane(n, 0).data();
    for (std::size_t co = 0; co < c_out; ++co) std::fill(dst + co * pixels, dst + (co + 1) * pixels, kernels.bias[co]);
    gemm_acc(kernels.weights.data(), src, dst, c_out, patch, pixels);
  }
  return out;
}

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor4<T>& input, const KernelBank<T>& kernels, const Tensor4<T>& grad_out,
                             std::size_t pad, std::size_t stride) {
  const Shape4 is = input.shape();
  if (stride < 1) throw ShapeError("conv2d_backward: stride must be >= 1");
  if (is.c != kernels.c_in()) throw ShapeError("conv2d_backward: input/kernel channel mismatch");
  const std::size_t kh = kernels.kh(), kw = kernels.kw();
  const Shape4 expected{is.n, kernels.c_out(), conv_out_extent(is.h, kh, pad, stride),
                        conv_out_extent(is.w, kw, pad, stride)};
  check_same_shape(grad_out.shape(), expected, "conv2d_backward");

  const std::size_t oh = expected.h, ow = expected.w, c_out = kernels.c_out();
  const std::size_t patch = is.c * kh * kw, pixels = oh * ow;
  const Index s = static_cast<Index>(stride), p = static_cast<Index>(pad);
  ConvGrads<T> g{Tensor4<T>(is), Tensor4<T>(kernels.weights.shape()), Tensor4<T>(kernels.bias.shape())};

  const bool pointwise = is_pointwise(kh, kw, pad, stride);
  std::vector<T> col(pointwise ? 0 : patch * pixels);
  std::vector<T> dcol(pointwise ? 0 : patch * pixels);
  for (std::size_t n = 0; n < is.n; ++n) {
    const T* gout = grad_out.plane(n, 0).data();
    const T* src = input.plane(n, 0).data();
    if (!pointwise) {
      im2col(src, is.c, is.h, is.w, kh, kw, oh, ow, p, s, col.data());
      src = col.data();
    }
    gemm_acc_bt(gout, src, g.weights.data(), c_out, pixels, patch);  // dW += dY col^T
    T* dst = pointwise ? g.input.plane(n, 0).data() : dcol.data();
    gemm_at(kernels.weights.data(), gout, dst, c_out, patch, pixels);  // dcol = W^T dY
    if (!pointwise) col2im(dcol.data(), is.c, is.h, is.w, kh, kw, oh, ow, p, s, g.input.plane(n, 0).data());
  }
  for (std::size_t co = 0; co < c_out; ++co) {
    T acc = 0;
    for (std::size_t n = 0; n < is.n; ++n) acc += sum<T>(grad_out.plane(n, co));
    g.bias[co] = acc;
  }
  return g;
}

// ---------------------------------------------------------------------------

template <typename T>
PoolResult<T> max_pool_2x2(const Tensor4<T>& input) {
  const Shape4 is = input.shape();
  if (is.h % 2 != 0 || is.w % 2 != 0) {
    throw ShapeError("max_pool_2x2: spatial extent must be even, got " + is.str());
  }
  const Shape4 os{is.n, is.c, is.h / 2, is.w / 2};
  PoolResult<T> r{Tensor4<T>(os), PoolIndices{os, is.h, is.w, std::vector<std::uint32_t>(os.count())}};
  for (std::size_t n = 0; n < is.n; ++n) {
    for (std::size_t c = 0; c < is.c; ++c) {
      const T* src = input.plane(n, c).data();
      const std::size_t base = r.output.offset(n, c, 0, 0);
      for (std::size_t oy = 0; oy < os.h; ++oy) {
        for (std::size_t ox = 0; ox < os.w; ++ox) {
          const std::size_t window[4] = {2 * oy * is.w + 2 * ox, 2 * oy * is.w + 2 * ox + 1,
                                         (2 * oy + 1) * is.w + 2 * ox, (2 * oy + 1) * is.w + 2 * ox + 1};
          std::size_t best = window[0];
          for (int k = 1; k < 4; ++k) {
            if (src[window[k]] > src[best]) best = window[k];
          }
          r.output[base + oy * os.w + ox] = src[best];
          r.indices.offsets[base + oy * os.w + ox] = static_cast<std::uint32_t>(best);
        }
      }
    }
  }
  return r;
}

namespace {

void check_indices(const PoolIndices& idx, const char* op) {
  if (idx.offsets.size() != idx.shape.count()) throw ShapeError(std::string(op) + ": index table size mismatch");
  if (idx.in_h != 2 * idx.shape.h || idx.in_w != 2 * idx.shape.w) {
    throw ShapeError(std::string(op) + ": index source extent inconsistent with pooled shape");
  }
  for (std::size_t i = 0; i < idx.offsets.size(); ++i) {
    const std::size_t oy = (i / idx.shape.w) % idx.shape.h;
    const std::size_t ox = i % idx.shape.w;
    const std::size_t off = idx.offsets[i];
    const std::size_t y = off / idx.in_w, x = off % idx.in_w;
    if (off >= idx.in_h * idx.in_w || y / 2 != oy || x / 2 != ox) {
      throw ShapeError(std::string(op) + ": pool index " + std::to_string(off) + " at position " + std::to_string(i) +
                       " lies outside its 2x2 window");
    }
  }
}

}  // namespace

template <typename T>
Tensor4<T> max_pool_2x2_backward(const Tensor4<T>& grad_out, const PoolIndices& indices) {
  return unpool_indices(grad_out, indices, indices.in_h, indices.in_w);
}

template <typename T>
Tensor4<T> unpool_indices(const Tensor4<T>& input, const PoolIndices& indices, std::size_t out_h, std::size_t out_w) {
  check_same_shape(input.shape(), indices.shape, "unpool_indices");
  if (out_h != indices.in_h || out_w != indices.in_w) {
    throw ShapeError("unpool_indices: requested " + std::to_string(out_h) + "x" + std::to_string(out_w) +
                     " but indices come from a " + std::to_string(indices.in_h) + "x" +
                     std::to_string(indices.in_w) + " map");
  }
  check_indices(indices, "unpool_indices");
  const Shape4 is = input.shape();
  Tensor4<T> out(Shape4{is.n, is.c, out_h, out_w});
  const std::size_t plane_in = is.plane();
  for (std::size_t nc = 0; nc < is.n * is.c; ++nc) {
    T* dst = out.data() + nc * out_h * out_w;
    for (std::size_t i = 0; i < plane_in; ++i) dst[indices.offsets[nc * plane_in + i]] = input[nc * plane_in + i];
  }
  return out;
}

template <typename T>
Tensor4<T> unpool_indices_backward(const Tensor4<T>& grad_out, const PoolIndices& indices) {
  const Shape4 expected{indices.shape.n, indices.shape.c, indices.in_h, indices.in_w};
  check_same_shape(grad_out.shape(), expected, "unpool_indices_backward");
  check_indices(indices, "unpool_indices_backward");
  Tensor4<T> g(indices.shape);
  const std::size_t plane_in = indices.shape.plane();
  const std::size_t plane_out = indices.in_h * indices.in_w;
  for (std::size_t nc = 0; nc < indices.shape.n * indices.shape.c; ++nc) {
    const T* src = grad_out.data() + nc * plane_out;
    for (std::size_t i = 0; i < plane_in; ++i) g[nc * plane_in + i] = src[indices.offsets[nc * plane_in + i]];
  }
  return g;
}

template <typename T>
Tensor4<T> unpool_zero_fill(const Tensor4<T>& input, std::size_t s) {
  if (s < 1) throw ShapeError("unpool_zero_fill: block size must be >= 1");
  require_finite(input, "unpool_zero_fill input");
  const Shape4 is = input.shape();
  Tensor4<T> out(Shape4{is.n, is.c, is.h * s, is.w * s});
  for (std::size_t n = 0; n < is.n; ++n) {
    for (std::size_t c = 0; c < is.c; ++c) {
      for (std::size_t y = 0; y < is.h; ++y) {
        for (std::size_t x = 0; x < is.w; ++x) out.at(n, c, y * s, x * s) = input.at(n, c, y, x);
      }
    }
  }
  return out;
}

template <typename T>
Tensor4<T> unpool_zero_fill_backward(const Tensor4<T>& grad_out, std::size_t s) {
  const Shape4 os = grad_out.shape();
  if (s < 1 || os.h % s != 0 || os.w % s != 0) {
    throw ShapeError("unpool_zero_fill_backward: gradient extent not a multiple of block size");
  }
  Tensor4<T> g(Shape4{os.n, os.c, os.h / s, os.w / s});
  for (std::size_t n = 0; n < os.n; ++n) {
    for (std::size_t c = 0; c < os.c; ++c) {
      for (std::size_t y = 0; y < os.h / s; ++y) {
        for (std::size_t x = 0; x < os.w / s; ++x) g.at(n, c, y, x) = grad_out.at(n, c, y * s, x * s);
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------------------

template <typename T>
Tensor4<T> relu(const Tensor4<T>& input) {
  Tensor4<T> out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) out[i] = input[i] > T{0} ? input[i] : T{0};
  return out;
}

template <typename T>
Tensor4<T> relu_backward(const Tensor4<T>& input, const Tensor4<T>& grad_out) {
  check_same_shape(input.shape(), grad_out.shape(), "relu_backward");
  Tensor4<T> g(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) g[i] = input[i] > T{0} ? grad_out[i] : T{0};
  return g;
}

template <typename T>
Tensor4<T> add(const Tensor4<T>& a, const Tensor4<T>& b) {
  check_same_shape(a.shape(), b.shape(), "add");
  Tensor4<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

template <typename T>
Tensor4<T> concat_channels(const Tensor4<T>& a, const Tensor4<T>& b) {
  const Shape4 sa = a.shape(), sb = b.shape();
  if (sa.n != sb.n || sa.h != sb.h || sa.w != sb.w) {
    throw ShapeError("concat_channels: (n, h, w) mismatch " + sa.str() + " vs " + sb.str());
  }
  Tensor4<T> out(Shape4{sa.n, sa.c + sb.c, sa.h, sa.w});
  const std::size_t block_a = sa.c * sa.plane(), block_b = sb.c * sb.plane();
  for (std::size_t n = 0; n < sa.n; ++n) {
    std::copy_n(a.data() + n * block_a, block_a, out.data() + n * (block_a + block_b));
    std::copy_n(b.data() + n * block_b, block_b, out.data() + n * (block_a + block_b) + block_a);
  }
  return out;
}

template <typename T>
std::pair<Tensor4<T>, Tensor4<T>> split_channels(const Tensor4<T>& t, std::size_t channels_a) {
  const Shape4 s = t.shape();
  if (channels_a == 0 || channels_a >= s.c) {
    throw ShapeError("split_channels: cannot split " + std::to_string(s.c) + " channels at " +
                     std::to_string(channels_a));
  }
  Tensor4<T> a(Shape4{s.n, channels_a, s.h, s.w});
  Tensor4<T> b(Shape4{s.n, s.c - channels_a, s.h, s.w});
  const std::size_t block_a = channels_a * s.plane(), block_b = (s.c - channels_a) * s.plane();
  for (std::size_t n = 0; n < s.n; ++n) {
    std::copy_n(t.data() + n * (block_a + block_b), block_a, a.data() + n * block_a);
    std::copy_n(t.data() + n * (block_a + block_b) + block_a, block_b, b.data() + n * block_b);
  }
  return {std::move(a), std::move(b)};
}

// ---------------------------------------------------------------------------

template <typename T>
Tensor4<T> batch_norm_apply(const Tensor4<T>& input, const BatchNormState<T>& state, Mode mode,
                            BatchNormCache<T>* cache) {
  const Shape4 s = input.shape();
  if (state.channels() != s.c) {
    throw ShapeError("batch_norm: state has " + std::to_string(state.channels()) + " channels, input has " +
                     std::to_string(s.c));
  }
  const std::size_t m = s.n * s.plane();
  if (m == 0) throw ShapeError("batch_norm: zero batch x spatial extent");

  Tensor4<T> out(s);
  Tensor4<T> normalized(s);
  std::vector<double> inv_std(s.c), batch_mean, batch_var;
  if (mode == Mode::train) {
    batch_mean.resize(s.c);
    batch_var.resize(s.c);
  }
  for (std::size_t c = 0; c < s.c; ++c) {
    double mean, var;
    if (mode == Mode::train) {
      double acc = 0;
      for (std::size_t n = 0; n < s.n; ++n) {
        for (T v : input.plane(n, c)) acc += v;
      }
      mean = acc / static_cast<double>(m);
      double sq = 0;
      for (std::size_t n = 0; n < s.n; ++n) {
        for (T v : input.plane(n, c)) sq += (v - mean) * (v - mean);
      }
      var = sq / static_cast<double>(m);
      batch_mean[c] = mean;
      batch_var[c] = var;
    } else {
      mean = state.running_mean[c];
      var = state.running_var[c];
    }
    const double is = 1.0 / std::sqrt(var + state.epsilon);
    inv_std[c] = is;
    const double g = state.gamma[c], b = state.beta[c];
    for (std::size_t n = 0; n < s.n; ++n) {
      std::span<const T> src = input.plane(n, c);
      std::span<T> xh = normalized.plane(n, c);
      std::span<T> dst = out.plane(n, c);
      for (std::size_t i = 0; i < src.size(); ++i) {
        const double x_hat = (src[i] - mean) * is;
        xh[i] = static_cast<T>(x_hat);
        dst[i] = static_cast<T>(g * x_hat + b);
      }
    }
  }
  if (cache) {
    cache->mode = mode;
    cache->normalized = std::move(normalized);
    cache->inv_std = std::move(inv_std);
    cache->batch_mean = std::move(batch_mean);
    cache->batch_var = std::move(batch_var);
  }
  return out;
}

template <typename T>
void update_running_stats(BatchNormState<T>& state, const BatchNormCache<T>& cache) {
  if (cache.mode != Mode::train || cache.batch_mean.size() != state.channels()) {
    throw ShapeError("update_running_stats: cache holds no train-mode statistics for this state");
  }
  for (std::size_t c = 0; c < state.channels(); ++c) {
    state.running_mean[c] =
        static_cast<T>((1.0 - state.momentum) * state.running_mean[c] + state.momentum * cache.batch_mean[c]);
    state.running_var[c] =
        static_cast<T>((1.0 - state.momentum) * state.running_var[c] + state.momentum * cache.batch_var[c]);
  }
}

template <typename T>
Tensor4<T> batch_norm(const Tensor4<T>& input, BatchNormState<T>& state, Mode mode, BatchNormCache<T>* cache) {
  BatchNormCache<T> local;
  BatchNormCache<T>& c = cache ? *cache : local;
  Tensor4<T> out = batch_norm_apply(input, state, mode, &c);
  if (mode == Mode::train) update_running_stats(state, c);
  return out;
}

template <typename T>
BatchNormGrads<T> batch_norm_backward(const BatchNormCache<T>& cache, const BatchNormState<T>& state,
                                      const Tensor4<T>& grad_out) {
  const Shape4 s = grad_out.shape();
  check_same_shape(cache.normalized.shape(), s, "batch_norm_backward");
  if (state.channels() != s.c || cache.inv_std.size() != s.c) {
    throw ShapeError("batch_norm_backward: channel mismatch");
  }
  BatchNormGrads<T> g{Tensor4<T>(s), Tensor4<T>(state.gamma.shape()), Tensor4<T>(state.beta.shape())};
  const double m = static_cast<double>(s.n * s.plane());
  for (std::size_t c = 0; c < s.c; ++c) {
    double sum_dy = 0, sum_dy_xh = 0;
    for (std::size_t n = 0; n < s.n; ++n) {
      std::span<const T> dy = grad_out.plane(n, c);
      std::span<const T> xh = cache.normalized.plane(n, c);
      for (std::size_t i = 0; i < dy.size(); ++i) {
        sum_dy += dy[i];
        sum_dy_xh += static_cast<double>(dy[i]) * xh[i];
      }
    }
    g.gamma[c] = static_cast<T>(sum_dy_xh);
    g.beta[c] = static_cast<T>(sum_dy);
    const double scale = static_cast<double>(state.gamma[c]) * cache.inv_std[c];
    for (std::size_t n = 0; n < s.n; ++n) {
      std::span<const T> dy = grad_out.plane(n, c);
      std::span<const T> xh = cache.normalized.plane(n, c);
      std::span<T> dx = g.input.plane(n, c);
      if (cache.mode == Mode::train) {
        for (std::size_t i = 0; i < dy.size(); ++i) {
          dx[i] = static_cast<T>(scale / m * (m * dy[i] - sum_dy - xh[i] * sum_dy_xh));
        }
      } else {
        for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = static_cast<T>(scale * dy[i]);
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------------------

#define HEIGHTNET_INSTANTIATE_OPS(T)                                                                               \
  template Tensor4<T> conv2d(const Tensor4<T>&, const KernelBank<T>&, std::size_t, std::size_t);                   \
  template ConvGrads<T> conv2d_backward(const Tensor4<T>&, const KernelBank<T>&, const Tensor4<T>&, std::size_t,   \
                                        std::size_t);                                                              \
  template PoolResult<T> max_pool_2x2(const Tensor4<T>&);                                                          \
  template Tensor4<T> max_pool_2x2_backward(const Tensor4<T>&, const PoolIndices&);                                \
  template Tensor4<T> unpool_indices(const Tensor4<T>&, const PoolIndices&, std::size_t, std::size_t);             \
  template Tensor4<T> unpool_indices_backward(const Tensor4<T>&, const PoolIndices&);                              \
  template Tensor4<T> unpool_zero_fill(const Tensor4<T>&, std::size_t);                                            \
  template Tensor4<T> unpool_zero_fill_backward(const Tensor4<T>&, std::size_t);                                   \
  template Tensor4<T> relu(const Tensor4<T>&);                                                                     \
  template Tensor4<T> relu_backward(const Tensor4<T>&, const Tensor4<T>&);                                         \
  template Tensor4<T> add(const Tensor4<T>&, const Tensor4<T>&);                                                   \
  template Tensor4<T> concat_channels(const Tensor4<T>&, const Tensor4<T>&);                                       \
  template std::pair<Tensor4<T>, Tensor4<T>> split_channels(const Tensor4<T>&, std::size_t);                       \
  template Tensor4<T> batch_norm(const Tensor4<T>&, BatchNormState<T>&, Mode, BatchNormCache<T>*);                 \
  template Tensor4<T> batch_norm_apply(const Tensor4<T>&, const BatchNormState<T>&, Mode, BatchNormCache<T>*);     \
  template void update_running_stats(BatchNormState<T>&, const BatchNormCache<T>&);                                \
  template BatchNormGrads<T> batch_norm_backward(const BatchNormCache<T>&, const BatchNormState<T>&,               \
                                                 const Tensor4<T>&);

HEIGHTNET_INSTANTIATE_OPS(float)
HEIGHTNET_INSTANTIATE_OPS(double)

}  // namespace heightnet
