#include "heightnet/network.hpp"

#include <atomic>

#include "heightnet/init.hpp"

namespace heightnet {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

std::uint64_t next_network_id() {
  static std::atomic<std::uint64_t> counter{0};
  return ++counter;
}

template <typename T>
void accumulate(Tensor4<T>& param, const Tensor4<T>& grad) {
  std::span<T> g = param.grad();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += grad[i];
}

template <typename T>
KernelBank<T> make_kernels(std::size_t c_out, std::size_t c_in, std::size_t k, std::uint64_t seed) {
  KernelBank<T> bank(c_out, c_in, k, k);
  bank.weights = glorot_normal_init<T>(bank.weights.shape(), seed);
  return bank;
}

template <typename T>
Tensor4<T> stack_forward(const Tensor4<T>& input, const Block<T>& block, Mode mode, bool shortcut,
                         BlockCache<T>* cache) {
  if (input.shape().c != block.in_channels) {
    throw ShapeError(block.name + ": expected " + std::to_string(block.in_channels) + " input channels, got " +
                     std::to_string(input.shape().c));
  }
  const std::size_t layers = block.convs.size();
  if (cache) {
    *cache = BlockCache<T>{};
    cache->input = input;
  }
  Tensor4<T> h = input;
  for (std::size_t k = 0; k < layers; ++k) {
    if (cache) cache->conv_inputs.push_back(h);
    h = conv2d(h, block.convs[k], 1, 1);
    if (!block.norms.empty()) {
      BatchNormCache<T> bn;
      h = batch_norm_apply(h, block.norms[k], mode, cache ? &bn : nullptr);
      if (cache) cache->norms.push_back(std::move(bn));
    }
    if (k + 1 < layers) {
      if (cache) cache->pre_activations.push_back(h);
      h = relu(h);
    }
  }
  if (shortcut) {
    h = block.projection ? add(h, conv2d(input, *block.projection, 0, 1)) : add(h, input);
  }
  if (block.spec.activation == Activation::relu) {
    if (cache) cache->pre_activations.push_back(h);
    return relu(h);
  }
  return h;
}

}  // namespace

template <typename T>
Tensor4<T> residual_block_forward(const Tensor4<T>& input, const Block<T>& block, Mode mode, BlockCache<T>* cache) {
  return stack_forward(input, block, mode, true, cache);
}

template <typename T>
Tensor4<T> plain_block_forward(const Tensor4<T>& input, const Block<T>& block, Mode mode, BlockCache<T>* cache) {
  return stack_forward(input, block, mode, false, cache);
}

template <typename T>
Tensor4<T> block_forward(const Tensor4<T>& input, const Block<T>& block, Mode mode, BlockCache<T>* cache) {
  return block.spec.kind == BlockKind::residual ? residual_block_forward(input, block, mode, cache)
                                                : plain_block_forward(input, block, mode, cache);
}

template <typename T>
Tensor4<T> block_backward(Block<T>& block, const BlockCache<T>& cache, const Tensor4<T>& grad_out) {
  const std::size_t layers = block.convs.size();
  const bool has_act = block.spec.activation == Activation::relu;
  if (cache.conv_inputs.size() != layers || cache.pre_activations.size() != layers - 1 + (has_act ? 1 : 0) ||
      (!block.norms.empty() && cache.norms.size() != layers)) {
    throw ShapeError(block.name + ": cache does not match block structure");
  }
  Tensor4<T> g = has_act ? relu_backward(cache.pre_activations.back(), grad_out) : grad_out;

  std::optional<Tensor4<T>> shortcut_grad;
  if (block.spec.kind == BlockKind::residual) {
    if (block.projection) {
      ConvGrads<T> pg = conv2d_backward(cache.input, *block.projection, g, 0, 1);
      accumulate(block.projection->weights, pg.weights);
      accumulate(block.projection->bias, pg.bias);
      shortcut_grad = std::move(pg.input);
    } else {
      shortcut_grad = g;
    }
  }
  for (std::size_t k = layers; k-- > 0;) {
    if (k + 1 < layers) g = relu_backward(cache.pre_activations[k], g);
    if (!block.norms.empty()) {
      BatchNormGrads<T> bg = batch_norm_backward(cache.norms[k], block.norms[k], g);
      accumulate(block.norms[k].gamma, bg.gamma);
      accumulate(block.norms[k].beta, bg.beta);
      g = std::move(bg.input);
    }
    ConvGrads<T> cg = conv2d_backward(cache.conv_inputs[k], block.convs[k], g, 1, 1);
    accumulate(block.convs[k].weights, cg.weights);
    accumulate(block.convs[k].bias, cg.bias);
    g = std::move(cg.input);
  }
  if (shortcut_grad) g = add(g, *shortcut_grad);
  return g;
}

// ---------------------------------------------------------------------------

template <typename T>
Network<T> Network<T>::build(const NetworkConfig& config) {
  config.validate();
  Network net;
  net.config_ = config;
  net.id_ = next_network_id();

  std::uint64_t ordinal = 0;
  auto seed_for = [&]() { return splitmix64(config.seed ^ splitmix64(++ordinal)); };
  auto make_block = [&](const std::string& name, const BlockSpec& spec, std::size_t in_channels) {
    Block<T> b;
    b.name = name;
    b.spec = spec;
    b.in_channels = in_channels;
    std::size_t c_in = in_channels;
    for (std::size_t k = 0; k < spec.conv_layers; ++k) {
      b.convs.push_back(make_kernels<T>(spec.channels, c_in, 3, seed_for()));
      if (config.use_batch_norm) b.norms.emplace_back(spec.channels);
      c_in = spec.channels;
    }
    if (spec.kind == BlockKind::residual && in_channels != spec.channels) {
      b.projection = make_kernels<T>(spec.channels, in_channels, 1, seed_for());
    }
    return b;
  };

  std::size_t channels = config.input_channels;
  std::size_t skip_channels = 0;
  for (std::size_t i = 0; i < config.encoder.size(); ++i) {
    net.encoder_.push_back(make_block("enc" + std::to_string(i), config.encoder[i].block, channels));
    channels = config.encoder[i].block.channels;
    if (config.skip && config.skip->source == i) skip_channels = channels;
  }
  for (std::size_t j = 0; j < config.decoder.size(); ++j) {
    const std::size_t in = channels + ((config.skip && config.skip->target == j) ? skip_channels : 0);
    net.decoder_.push_back(make_block("dec" + std::to_string(j), config.decoder[j].block, in));
    channels = config.decoder[j].block.channels;
  }
  net.head_ = make_kernels<T>(1, channels, 3, seed_for());
  return net;
}

template <typename T>
Tensor4<T> Network<T>::run(const Tensor4<T>& image, Mode mode, ForwardCache<T>* cache) const {
  const Shape4 s = image.shape();
  if (s.c != config_.input_channels) {
    throw ShapeError("network: expected " + std::to_string(config_.input_channels) + "-channel input, got " +
                     std::to_string(s.c));
  }
  const std::size_t div = std::size_t{1} << config_.pool_count();
  if (s.h % div != 0 || s.w % div != 0) {
    throw ShapeError("network: spatial extent " + std::to_string(s.h) + "x" + std::to_string(s.w) +
                     " is not divisible by " + std::to_string(div) + "; pad the input first");
  }
  if (cache) {
    *cache = ForwardCache<T>{};
    cache->mode = mode;
    cache->network_id = id_;
    cache->version = version_;
    cache->input_shape = s;
    cache->encoder.resize(encoder_.size());
    cache->decoder.resize(decoder_.size());
  }

  Tensor4<T> x = image;
  Tensor4<T> skip;
  std::vector<PoolIndices> stack;
  for (std::size_t i = 0; i < encoder_.size(); ++i) {
    x = block_forward(x, encoder_[i], mode, cache ? &cache->encoder[i] : nullptr);
    if (config_.skip && config_.skip->source == i) skip = x;
    if (config_.encoder[i].pool_after) {
      PoolResult<T> pr = max_pool_2x2(x);
      if (cache) cache->pools.push_back(pr.indices);
      stack.push_back(std::move(pr.indices));
      x = std::move(pr.output);
    }
  }
  for (std::size_t j = 0; j < decoder_.size(); ++j) {
    if (config_.decoder[j].unpool_before) {
      const PoolIndices& idx = stack.back();
      x = unpool_indices(x, idx, idx.in_h, idx.in_w);
      stack.pop_back();
    }
    if (config_.skip && config_.skip->target == j) {
      if (cache) cache->skip_split = x.shape().c;
      x = concat_channels(x, skip);
    }
    x = block_forward(x, decoder_[j], mode, cache ? &cache->decoder[j] : nullptr);
  }
  if (cache) cache->head_input = x;
  return conv2d(x, head_, 1, 1);
}

template <typename T>
ForwardResult<T> Network<T>::forward(const Tensor4<T>& image, Mode mode) {
  ForwardResult<T> r;
  if (mode == Mode::infer) {
    r.height = run(image, mode, nullptr);
    return r;
  }
  r.height = run(image, mode, &r.cache);
  auto commit = [](std::vector<Block<T>>& blocks, const std::vector<BlockCache<T>>& caches) {
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      for (std::size_t k = 0; k < blocks[b].norms.size(); ++k) update_running_stats(blocks[b].norms[k], caches[b].norms[k]);
    }
  };
  commit(encoder_, r.cache.encoder);
  commit(decoder_, r.cache.decoder);
  return r;
}

template <typename T>
Tensor4<T> Network<T>::predict(const Tensor4<T>& image) const {
  return run(image, Mode::infer, nullptr);
}

template <typename T>
Tensor4<T> Network<T>::backward(const ForwardCache<T>& cache, const Tensor4<T>& grad_height) {
  if (!cache.usable_for_backward()) throw ShapeError("backward: cache is not from a train-mode forward pass");
  if (cache.network_id != id_ || cache.version != version_) {
    throw ShapeError("backward: stale cache (parameters changed since the forward pass)");
  }
  const Shape4 expected{cache.input_shape.n, 1, cache.input_shape.h, cache.input_shape.w};
  if (grad_height.shape() != expected) {
    throw ShapeError("backward: gradient shape " + grad_height.shape().str() + ", expected " + expected.str());
  }

  ConvGrads<T> hg = conv2d_backward(cache.head_input, head_, grad_height, 1, 1);
  accumulate(head_.weights, hg.weights);
  accumulate(head_.bias, hg.bias);
  Tensor4<T> g = std::move(hg.input);

  std::optional<Tensor4<T>> skip_grad;
  std::size_t unpools_seen = 0;
  const std::size_t pools = cache.pools.size();
  for (std::size_t j = decoder_.size(); j-- > 0;) {
    g = block_backward(decoder_[j], cache.decoder[j], g);
    if (config_.skip && config_.skip->target == j) {
      auto [own, skipped] = split_channels(g, cache.skip_split);
      g = std::move(own);
      skip_grad = std::move(skipped);
    }
    if (config_.decoder[j].unpool_before) {
      // Walking the decoder backwards visits unpools in encoder pool order.
      g = unpool_indices_backward(g, cache.pools[unpools_seen]);
      ++unpools_seen;
    }
  }
  std::size_t pool_ordinal = pools;
  for (std::size_t i = encoder_.size(); i-- > 0;) {
    if (config_.encoder[i].pool_after) g = max_pool_2x2_backward(g, cache.pools[--pool_ordinal]);
    if (config_.skip && config_.skip->source == i) g = add(g, *skip_grad);
    g = block_backward(encoder_[i], cache.encoder[i], g);
  }
  return g;
}

template <typename T>
template <typename Visitor>
void Network<T>::visit(Visitor&& v) {
  auto visit_block = [&](Block<T>& b) {
    for (std::size_t k = 0; k < b.convs.size(); ++k) {
      const std::string p = b.name + ".conv" + std::to_string(k);
      v(p + ".weight", b.convs[k].weights, true);
      v(p + ".bias", b.convs[k].bias, true);
      if (!b.norms.empty()) {
        const std::string q = b.name + ".bn" + std::to_string(k);
        v(q + ".gamma", b.norms[k].gamma, true);
        v(q + ".beta", b.norms[k].beta, true);
        v(q + ".running_mean", b.norms[k].running_mean, false);
        v(q + ".running_var", b.norms[k].running_var, false);
      }
    }
    if (b.projection) {
      v(b.name + ".proj.weight", b.projection->weights, true);
      v(b.name + ".proj.bias", b.projection->bias, true);
    }
  };
  for (auto& b : encoder_) visit_block(b);
  for (auto& b : decoder_) visit_block(b);
  v(std::string("head.weight"), head_.weights, true);
  v(std::string("head.bias"), head_.bias, true);
}

template <typename T>
template <typename Visitor>
void Network<T>::visit(Visitor&& v) const {
  const_cast<Network*>(this)->visit(
      [&](const std::string& name, const Tensor4<T>& t, bool trainable) { v(name, t, trainable); });
}

template <typename T>
void Network<T>::zero_grad() {
  visit([](const std::string&, Tensor4<T>& t, bool trainable) {
    if (trainable) t.zero_grad();
  });
}

template <typename T>
ParameterCount Network<T>::parameter_count() const {
  ParameterCount c;
  visit([&](const std::string&, const Tensor4<T>& t, bool trainable) {
    (trainable ? c.trainable : c.non_trainable) += t.size();
  });
  return c;
}

template <typename T>
std::vector<ParameterRef<T>> Network<T>::parameters() {
  ++version_;
  std::vector<ParameterRef<T>> out;
  visit([&](const std::string& name, Tensor4<T>& t, bool trainable) { out.push_back({name, &t, trainable}); });
  return out;
}

template <typename T>
std::vector<ConstParameterRef<T>> Network<T>::parameters() const {
  std::vector<ConstParameterRef<T>> out;
  visit([&](const std::string& name, const Tensor4<T>& t, bool trainable) { out.push_back({name, &t, trainable}); });
  return out;
}

#define HEIGHTNET_INSTANTIATE_NETWORK(T)                                                                       \
  template Tensor4<T> residual_block_forward(const Tensor4<T>&, const Block<T>&, Mode, BlockCache<T>*);        \
  template Tensor4<T> plain_block_forward(const Tensor4<T>&, const Block<T>&, Mode, BlockCache<T>*);           \
  template Tensor4<T> block_forward(const Tensor4<T>&, const Block<T>&, Mode, BlockCache<T>*);                 \
  template Tensor4<T> block_backward(Block<T>&, const BlockCache<T>&, const Tensor4<T>&);                      \
  template class Network<T>;

HEIGHTNET_INSTANTIATE_NETWORK(float)
HEIGHTNET_INSTANTIATE_NETWORK(double)

}  // namespace heightnet
