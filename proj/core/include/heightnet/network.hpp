#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "heightnet/network_config.hpp"
#include "heightnet/ops.hpp"
#include "heightnet/tensor.hpp"

namespace heightnet {

/// Instantiated parameters of one plain or residual block.
template <typename T>
struct Block {
  std::string name;  // "enc0", "dec3", ...
  BlockSpec spec;
  std::size_t in_channels = 0;
  std::vector<KernelBank<T>> convs;
  std::vector<BatchNormState<T>> norms;      // empty when normalization is off
  std::optional<KernelBank<T>> projection;   // 1x1 shortcut, residual blocks whose width changes
};

template <typename T>
struct BlockCache {
  Tensor4<T> input;
  std::vector<Tensor4<T>> conv_inputs;
  std::vector<BatchNormCache<T>> norms;
  std::vector<Tensor4<T>> pre_activations;  // input of each ReLU; the last one is the block activation's
};

/// sigma(x + F(x)), where F is the block's conv(+BN) stack with ReLU between
/// layers and the shortcut is the identity (or the 1x1 projection when the
/// channel count changes). Does not touch running statistics; the network
/// commits those after a train-mode pass.
template <typename T>
Tensor4<T> residual_block_forward(const Tensor4<T>& input, const Block<T>& block, Mode mode,
                                  BlockCache<T>* cache = nullptr);

/// sigma(F(x)) with the same layer stack and no shortcut.
template <typename T>
Tensor4<T> plain_block_forward(const Tensor4<T>& input, const Block<T>& block, Mode mode,
                               BlockCache<T>* cache = nullptr);

/// Dispatches on block.spec.kind.
template <typename T>
Tensor4<T> block_forward(const Tensor4<T>& input, const Block<T>& block, Mode mode, BlockCache<T>* cache = nullptr);

/// Accumulates parameter partials into the block's gradient slots and returns
/// the gradient with respect to the block input.
template <typename T>
Tensor4<T> block_backward(Block<T>& block, const BlockCache<T>& cache, const Tensor4<T>& grad_out);

template <typename T>
struct ForwardCache {
  Mode mode = Mode::infer;
  std::uint64_t network_id = 0;
  std::uint64_t version = 0;
  Shape4 input_shape;
  std::vector<BlockCache<T>> encoder;
  std::vector<BlockCache<T>> decoder;
  std::vector<PoolIndices> pools;  // encoder order
  std::size_t skip_split = 0;      // decoder-side channels ahead of the concatenated skip features
  Tensor4<T> head_input;

  bool usable_for_backward() const noexcept { return mode == Mode::train && network_id != 0; }
};

template <typename T>
struct ForwardResult {
  Tensor4<T> height;
  ForwardCache<T> cache;
};

template <typename T>
struct ParameterRef {
  std::string name;
  Tensor4<T>* tensor = nullptr;
  bool trainable = true;
};

template <typename T>
struct ConstParameterRef {
  std::string name;
  const Tensor4<T>* tensor = nullptr;
  bool trainable = true;
};

struct ParameterCount {
  std::size_t trainable = 0;
  std::size_t non_trainable = 0;
  friend bool operator==(const ParameterCount&, const ParameterCount&) = default;
};

/// Encoder/decoder height regressor built from a NetworkConfig.
///
/// Parameters are addressed by stable names (`enc0.conv1.weight`,
/// `dec3.bn0.running_var`, `head.bias`, ...). A built network is safe to
/// share between threads for `predict`; training must be single-writer.
template <typename T>
class Network {
 public:
  /// Kernels get Glorot-normal weights seeded from config.seed and zero bias;
  /// normalization starts at gamma 1, beta 0, running mean 0, running var 1.
  static Network build(const NetworkConfig& config);

  const NetworkConfig& config() const noexcept { return config_; }

  /// Train mode records a cache for backward() and folds batch statistics
  /// into the running averages. Infer mode returns an empty cache.
  ForwardResult<T> forward(const Tensor4<T>& image, Mode mode);

  /// Infer-mode forward pass; never mutates the network.
  Tensor4<T> predict(const Tensor4<T>& image) const;

  /// Accumulates d(loss)/d(parameter) into every trainable parameter's
  /// gradient slot and returns d(loss)/d(image). Throws ShapeError if the
  /// cache is not from a train-mode forward of this network at its current
  /// parameter version.
  Tensor4<T> backward(const ForwardCache<T>& cache, const Tensor4<T>& grad_height);

  void zero_grad();

  ParameterCount parameter_count() const;

  /// Mutable access; invalidates outstanding forward caches.
  std::vector<ParameterRef<T>> parameters();
  std::vector<ConstParameterRef<T>> parameters() const;

  const std::vector<Block<T>>& encoder_blocks() const noexcept { return encoder_; }
  const std::vector<Block<T>>& decoder_blocks() const noexcept { return decoder_; }
  std::vector<Block<T>>& encoder_blocks() noexcept { return encoder_; }
  std::vector<Block<T>>& decoder_blocks() noexcept { return decoder_; }
  const KernelBank<T>& head() const noexcept { return head_; }
  KernelBank<T>& head() noexcept { return head_; }

  std::uint64_t version() const noexcept { return version_; }

  /// Same structure and parameter values in another precision.
  template <typename U>
  Network<U> cast() const {
    Network<U> out = Network<U>::build(config_);
    auto src = parameters();
    auto dst = out.parameters();
    for (std::size_t i = 0; i < src.size(); ++i) *dst[i].tensor = src[i].tensor->template cast<U>();
    return out;
  }

 private:
  template <typename Visitor>
  void visit(Visitor&& v);
  template <typename Visitor>
  void visit(Visitor&& v) const;

  Tensor4<T> run(const Tensor4<T>& image, Mode mode, ForwardCache<T>* cache) const;

  NetworkConfig config_;
  std::vector<Block<T>> encoder_;
  std::vector<Block<T>> decoder_;
  KernelBank<T> head_;
  std::uint64_t id_ = 0;
  std::uint64_t version_ = 0;
};

}  // namespace heightnet
