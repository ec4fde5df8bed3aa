#include "heightnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "heightnet/network.hpp"
#include "heightnet/ops.hpp"

namespace heightnet {

namespace {

using Rng = std::mt19937_64;

void fnv_mix(std::uint64_t& h, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    h ^= (v >> (8 * i)) & 0xffu;
    h *= 0x100000001b3ull;
  }
}

constexpr std::uint64_t kFnvBasis = 0xcbf29ce484222325ull;

void fingerprint_signs(std::uint64_t& h, const Tensor4<double>& t) {
  std::uint64_t word = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    word = (word << 1) | (t[i] > 0 ? 1u : 0u);
    if (i % 64 == 63) fnv_mix(h, word);
  }
  fnv_mix(h, word);
}

void fingerprint_indices(std::uint64_t& h, const PoolIndices& idx) {
  for (std::uint32_t o : idx.offsets) fnv_mix(h, o);
}

Tensor4<double> random_tensor(Shape4 s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor4<double> t(s);
  for (double& v : t.values()) v = u(rng);
  return t;
}

double dot(const Tensor4<double>& a, const Tensor4<double>& b) {
  double acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

std::span<const double> view(const Tensor4<double>& t) { return t.values(); }

// Accumulates per-name results across trials.
class Collector {
 public:
  explicit Collector(const GradCheckOptions& o) : options_(o) {}

  void check(const std::string& name, Tensor4<double>& x, const Tensor4<double>& analytic, const Evaluator& eval) {
    GradCheckResult r = finite_difference_check(name, x.values(), view(analytic), eval, options_);
    auto [it, fresh] = merged_.try_emplace(name, r);
    if (!fresh) {
      it->second.max_relative_error = std::max(it->second.max_relative_error, r.max_relative_error);
      it->second.checked += r.checked;
      it->second.skipped += r.skipped;
    }
    if (std::find(order_.begin(), order_.end(), name) == order_.end()) order_.push_back(name);
  }

  GradCheckSummary finish() const {
    GradCheckSummary s;
    for (const auto& name : order_) {
      GradCheckResult r = merged_.at(name);
      r.passed = r.max_relative_error < options_.tolerance &&
                 static_cast<double>(r.skipped) <= options_.max_skip_fraction * static_cast<double>(r.checked + r.skipped);
      s.add(r);
    }
    return s;
  }

 private:
  GradCheckOptions options_;
  std::map<std::string, GradCheckResult> merged_;
  std::vector<std::string> order_;
};

}  // namespace

void GradCheckSummary::add(GradCheckResult r) {
  max_relative_error = std::max(max_relative_error, r.max_relative_error);
  passed = passed && r.passed;
  results.push_back(std::move(r));
}

double relative_error(double analytic, double numeric, double floor) noexcept {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

GradCheckResult finite_difference_check(const std::string& name, std::span<double> x,
                                        std::span<const double> analytic, const Evaluator& eval,
                                        const GradCheckOptions& options) {
  if (analytic.size() != x.size()) throw ShapeError("finite_difference_check: gradient size mismatch for " + name);
  GradCheckResult r;
  r.name = name;

  std::vector<std::size_t> coords(x.size());
  std::iota(coords.begin(), coords.end(), std::size_t{0});
  if (options.max_coordinates_per_tensor != 0 && coords.size() > options.max_coordinates_per_tensor) {
    Rng rng(options.seed ^ std::hash<std::string>{}(name));
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(options.max_coordinates_per_tensor);
    std::sort(coords.begin(), coords.end());
  }

  const std::uint64_t base = eval().signature;
  for (std::size_t i : coords) {
    const double saved = x[i];
    x[i] = saved + options.step;
    const Evaluation plus = eval();
    x[i] = saved - options.step;
    const Evaluation minus = eval();
    x[i] = saved;
    if (plus.signature != base || minus.signature != base) {
      ++r.skipped;
      continue;
    }
    const double numeric = (plus.value - minus.value) / (2.0 * options.step);
    r.max_relative_error = std::max(r.max_relative_error, relative_error(analytic[i], numeric, options.floor));
    ++r.checked;
  }
  r.passed = r.max_relative_error < options.tolerance &&
             static_cast<double>(r.skipped) <= options.max_skip_fraction * static_cast<double>(coords.size());
  return r;
}

GradCheckSummary check_primitives(const GradCheckOptions& options) {
  Rng rng(options.seed);
  Collector out(options);
  std::uniform_int_distribution<std::size_t> small(1, 3);
  std::uniform_int_distribution<std::size_t> half_extent(1, 3);

  for (std::size_t trial = 0; trial < options.trials; ++trial) {
    const std::size_t n = small(rng) > 2 ? 2 : 1;
    const std::size_t c = small(rng);
    const std::size_t h = 2 * half_extent(rng), w = 2 * half_extent(rng);
    const Shape4 s{n, c, h, w};

    // conv2d in three geometries: 3x3/pad 1, 1x1/pad 0, 3x3/pad 1/stride 2.
    struct Geometry {
      const char* name;
      std::size_t k, pad, stride;
    };
    for (const Geometry g : {Geometry{"conv2d", 3, 1, 1}, Geometry{"conv2d_1x1", 1, 0, 1},
                             Geometry{"conv2d_stride2", 3, 1, 2}}) {
      const std::size_t c_out = small(rng);
      Tensor4<double> x = random_tensor(s, rng);
      KernelBank<double> bank(c_out, c, g.k, g.k);
      bank.weights = random_tensor(bank.weights.shape(), rng);
      bank.bias = random_tensor(bank.bias.shape(), rng);
      const Tensor4<double> probe = random_tensor(conv2d(x, bank, g.pad, g.stride).shape(), rng);
      const ConvGrads<double> grads = conv2d_backward(x, bank, probe, g.pad, g.stride);
      const Evaluator eval = [&] { return Evaluation{dot(probe, conv2d(x, bank, g.pad, g.stride)), 0}; };
      out.check(std::string(g.name) + ".input", x, grads.input, eval);
      out.check(std::string(g.name) + ".weights", bank.weights, grads.weights, eval);
      out.check(std::string(g.name) + ".bias", bank.bias, grads.bias, eval);
    }

    {
      Tensor4<double> x = random_tensor(s, rng);
      const Tensor4<double> probe = random_tensor(Shape4{n, c, h / 2, w / 2}, rng);
      const Tensor4<double> grad = max_pool_2x2_backward(probe, max_pool_2x2(x).indices);
      out.check("max_pool_2x2.input", x, grad, [&] {
        PoolResult<double> p = max_pool_2x2(x);
        std::uint64_t sig = kFnvBasis;
        fingerprint_indices(sig, p.indices);
        return Evaluation{dot(probe, p.output), sig};
      });
    }

    {
      const PoolIndices idx = max_pool_2x2(random_tensor(s, rng)).indices;
      Tensor4<double> x = random_tensor(idx.shape, rng);
      const Tensor4<double> probe = random_tensor(s, rng);
      const Tensor4<double> grad = unpool_indices_backward(probe, idx);
      out.check("unpool_indices.input", x, grad,
                [&] { return Evaluation{dot(probe, unpool_indices(x, idx, h, w)), 0}; });
    }

    {
      const std::size_t block = small(rng);
      Tensor4<double> x = random_tensor(s, rng);
      const Tensor4<double> probe = random_tensor(Shape4{n, c, h * block, w * block}, rng);
      const Tensor4<double> grad = unpool_zero_fill_backward(probe, block);
      out.check("unpool_zero_fill.input", x, grad,
                [&] { return Evaluation{dot(probe, unpool_zero_fill(x, block)), 0}; });
    }

    {
      Tensor4<double> x = random_tensor(s, rng);
      const Tensor4<double> probe = random_tensor(s, rng);
      const Tensor4<double> grad = relu_backward(x, probe);
      out.check("relu.input", x, grad, [&] {
        std::uint64_t sig = kFnvBasis;
        fingerprint_signs(sig, x);
        return Evaluation{dot(probe, relu(x)), sig};
      });
    }

    {
      Tensor4<double> a = random_tensor(s, rng), b = random_tensor(s, rng);
      const Tensor4<double> probe = random_tensor(s, rng);
      const Evaluator eval = [&] { return Evaluation{dot(probe, add(a, b)), 0}; };
      out.check("add.a", a, probe, eval);
      out.check("add.b", b, probe, eval);
    }

    {
      const std::size_t c2 = small(rng);
      Tensor4<double> a = random_tensor(s, rng), b = random_tensor(Shape4{n, c2, h, w}, rng);
      const Tensor4<double> probe = random_tensor(Shape4{n, c + c2, h, w}, rng);
      auto [ga, gb] = split_channels(probe, c);
      const Evaluator eval = [&] { return Evaluation{dot(probe, concat_channels(a, b)), 0}; };
      out.check("concat_channels.a", a, ga, eval);
      out.check("concat_channels.b", b, gb, eval);
    }

    for (const Mode mode : {Mode::train, Mode::infer}) {
      const std::string prefix = mode == Mode::train ? "batch_norm_train" : "batch_norm_infer";
      Tensor4<double> x = random_tensor(s, rng, -2.0, 2.0);
      BatchNormState<double> state(c);
      state.gamma = random_tensor(state.gamma.shape(), rng, 0.5, 1.5);
      state.beta = random_tensor(state.beta.shape(), rng);
      state.running_mean = random_tensor(state.running_mean.shape(), rng);
      state.running_var = random_tensor(state.running_var.shape(), rng, 0.5, 2.0);
      const Tensor4<double> probe = random_tensor(s, rng);
      BatchNormCache<double> cache;
      batch_norm_apply(x, state, mode, &cache);
      const BatchNormGrads<double> grads = batch_norm_backward(cache, state, probe);
      const Evaluator eval = [&] { return Evaluation{dot(probe, batch_norm_apply(x, state, mode)), 0}; };
      out.check(prefix + ".input", x, grads.input, eval);
      out.check(prefix + ".gamma", state.gamma, grads.gamma, eval);
      out.check(prefix + ".beta", state.beta, grads.beta, eval);
    }
  }
  return out.finish();
}

GradCheckSummary check_network(const NetworkConfig& config, const GradCheckOptions& options, std::size_t spatial) {
  Network<double> net = Network<double>::build(config);
  const std::size_t div = std::size_t{1} << config.pool_count();
  if (spatial == 0) spatial = std::max<std::size_t>(8, div);
  if (spatial % div != 0) throw ConfigError("check_network: spatial extent must be divisible by " + std::to_string(div));

  Rng rng(options.seed);
  Tensor4<double> image = random_tensor(Shape4{1, config.input_channels, spatial, spatial}, rng, 0.0, 1.0);
  const Tensor4<double> probe = random_tensor(Shape4{1, 1, spatial, spatial}, rng);

  auto params = net.parameters();
  ForwardResult<double> fr = net.forward(image, Mode::train);
  net.zero_grad();
  const Tensor4<double> image_grad = net.backward(fr.cache, probe);

  const Evaluator eval = [&] {
    ForwardResult<double> r = net.forward(image, Mode::train);
    std::uint64_t sig = kFnvBasis;
    for (const auto* blocks : {&r.cache.encoder, &r.cache.decoder}) {
      for (const auto& b : *blocks) {
        for (const auto& pre : b.pre_activations) fingerprint_signs(sig, pre);
      }
    }
    for (const auto& p : r.cache.pools) fingerprint_indices(sig, p);
    return Evaluation{dot(probe, r.height), sig};
  };

  GradCheckSummary summary;
  auto finish = [&](GradCheckResult r) {
    r.passed = r.max_relative_error < options.tolerance &&
               static_cast<double>(r.skipped) <= options.max_skip_fraction * static_cast<double>(r.checked + r.skipped);
    summary.add(std::move(r));
  };
  for (auto& p : params) {
    if (!p.trainable) continue;
    const std::vector<double> analytic(p.tensor->grad().begin(), p.tensor->grad().end());
    finish(finite_difference_check("network." + p.name, p.tensor->values(), analytic, eval, options));
  }
  finish(finite_difference_check("network.input", image.values(), image_grad.values(), eval, options));
  return summary;
}

}  // namespace heightnet
