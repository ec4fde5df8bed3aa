#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "heightnet/error.hpp"
#include "heightnet/ops.hpp"
#include "oracles.hpp"

using namespace heightnet;

namespace {

KernelBank<double> bank(std::size_t co, std::size_t ci, std::size_t k) { return KernelBank<double>(co, ci, k, k); }

}  // namespace

// --- conv2d ---------------------------------------------------------------

TEST(Conv2d, IdentityKernelReproducesInput) {
  Tensor4<double> x(Shape4{1, 1, 3, 3}, 1.0);
  auto k = bank(1, 1, 3);
  k.weights.at(0, 0, 1, 1) = 1.0;
  EXPECT_EQ(conv2d(x, k, 1, 1), x);
}

TEST(Conv2d, ZeroWeightsGiveConstantBias) {
  std::mt19937_64 rng(3);
  const auto x = oracle::random_tensor<double>(Shape4{2, 3, 5, 4}, rng);
  auto k = bank(2, 3, 3);
  k.bias.fill(5.0);
  const auto y = conv2d(x, k, 1, 1);
  for (double v : y.values()) EXPECT_EQ(v, 5.0);
}

TEST(Conv2d, RampWithOnesKernelMatchesDirectSummation) {
  Tensor4<double> x(Shape4{1, 1, 4, 4});
  for (std::size_t i = 0; i < 16; ++i) x[i] = static_cast<double>(i);
  auto k = bank(1, 1, 3);
  k.weights.fill(1.0);
  const auto want = oracle::conv2d_direct(x, k, 1, 1);
  EXPECT_EQ(conv2d(x, k, 1, 1), want);
  // Spot check one interior and one corner value by hand: 0+1+4+5 at (0,0).
  EXPECT_EQ(want.at(0, 0, 0, 0), 10.0);
  EXPECT_EQ(want.at(0, 0, 1, 1), 0 + 1 + 2 + 4 + 5 + 6 + 8 + 9 + 10);
}

TEST(Conv2d, RandomShapesMatchDirectSummation) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t ci = 1 + trial % 3, co = 1 + (trial + 1) % 4;
    const auto x = oracle::random_tensor<double>(Shape4{2, ci, 5 + ci % 3, 6}, rng);
    auto k = bank(co, ci, 3);
    k.weights = oracle::random_tensor<double>(k.weights.shape(), rng);
    k.bias = oracle::random_tensor<double>(k.bias.shape(), rng);
    const std::size_t stride = 1 + trial % 2;
    const auto got = conv2d(x, k, 1, stride);
    const auto want = oracle::conv2d_direct(x, k, 1, stride);
    ASSERT_EQ(got.shape(), want.shape());
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
  }
}

TEST(Conv2d, PreservesSpatialShapeWithPadOne) {
  std::mt19937_64 rng(5);
  for (std::size_t h = 1; h <= 9; h += 2) {
    for (std::size_t w = 1; w <= 9; w += 4) {
      const auto x = oracle::random_tensor<float>(Shape4{1, 2, h, w}, rng);
      KernelBank<float> k(3, 2, 3, 3);
      const auto y = conv2d(x, k, 1, 1);
      EXPECT_EQ(y.shape(), (Shape4{1, 3, h, w}));
    }
  }
}

TEST(Conv2d, RejectsChannelMismatchAndNonFiniteInput) {
  Tensor4<double> x(Shape4{1, 2, 3, 3});
  EXPECT_THROW(conv2d(x, bank(1, 3, 3), 1, 1), ShapeError);
  x[4] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(conv2d(x, bank(1, 2, 3), 1, 1), NonFiniteError);
}

TEST(Conv2dBackward, ZeroUpstreamGradientGivesZeroPartials) {
  std::mt19937_64 rng(8);
  const auto x = oracle::random_tensor<double>(Shape4{1, 2, 4, 4}, rng);
  auto k = bank(3, 2, 3);
  k.weights = oracle::random_tensor<double>(k.weights.shape(), rng);
  const auto g = conv2d_backward(x, k, Tensor4<double>(Shape4{1, 3, 4, 4}), 1, 1);
  for (double v : g.input.values()) EXPECT_EQ(v, 0.0);
  for (double v : g.weights.values()) EXPECT_EQ(v, 0.0);
  for (double v : g.bias.values()) EXPECT_EQ(v, 0.0);
}

TEST(Conv2dBackward, ScalarChainRule) {
  Tensor4<double> x(Shape4{1, 1, 1, 1}, 2.5);
  KernelBank<double> k(1, 1, 1, 1);
  k.weights[0] = -0.75;
  const auto g = conv2d_backward(x, k, Tensor4<double>(Shape4{1, 1, 1, 1}, 1.0), 0, 1);
  EXPECT_EQ(g.weights[0], 2.5);
  EXPECT_EQ(g.input[0], -0.75);
  EXPECT_EQ(g.bias[0], 1.0);
}

// --- pooling --------------------------------------------------------------

TEST(MaxPool, StrictMaximumAtBottomRight) {
  Tensor4<double> x(Shape4{1, 1, 2, 2}, std::vector<double>{1, 2, 3, 4});
  const auto p = max_pool_2x2(x);
  EXPECT_EQ(p.output[0], 4.0);
  EXPECT_EQ(p.indices.offsets[0], 3u);
}

TEST(MaxPool, ConstantInputBreaksTiesTopLeft) {
  Tensor4<double> x(Shape4{1, 2, 4, 6}, 0.5);
  const auto p = max_pool_2x2(x);
  for (double v : p.output.values()) EXPECT_EQ(v, 0.5);
  for (std::size_t c = 0; c < 2; ++c) {
    for (std::size_t oy = 0; oy < 2; ++oy) {
      for (std::size_t ox = 0; ox < 3; ++ox) {
        EXPECT_EQ(p.indices.offsets[p.output.offset(0, c, oy, ox)], 2 * oy * 6 + 2 * ox);
      }
    }
  }
}

TEST(MaxPool, RandomInputMatchesWindowEnumeration) {
  std::mt19937_64 rng(21);
  const auto x = oracle::random_tensor<double>(Shape4{1, 1, 6, 6}, rng);
  const auto p = max_pool_2x2(x);
  const auto [want, want_idx] = oracle::max_pool_enumerate(x);
  EXPECT_EQ(p.output, want);
  EXPECT_EQ(p.indices.offsets, want_idx);
}

TEST(MaxPool, OddExtentIsRejected) {
  EXPECT_THROW(max_pool_2x2(Tensor4<double>(Shape4{1, 1, 3, 4})), ShapeError);
}

TEST(UnpoolIndices, RoundTripPlacesMaximaAtArgmax) {
  std::mt19937_64 rng(2);
  const auto x = oracle::random_tensor<double>(Shape4{1, 2, 4, 4}, rng);
  const auto p = max_pool_2x2(x);
  const auto u = unpool_indices(p.output, p.indices, 4, 4);
  const auto [want, want_idx] = oracle::max_pool_enumerate(x);
  for (std::size_t n = 0; n < 1; ++n) {
    for (std::size_t c = 0; c < 2; ++c) {
      for (std::size_t y = 0; y < 4; ++y) {
        for (std::size_t xx = 0; xx < 4; ++xx) {
          const std::size_t o = (y / 2) * 2 + xx / 2;
          const bool is_arg = want_idx[c * 4 + o] == y * 4 + xx;
          EXPECT_EQ(u.at(n, c, y, xx), is_arg ? x.at(n, c, y, xx) : 0.0);
        }
      }
    }
  }
}

TEST(UnpoolIndices, ZerosStayZero) {
  std::mt19937_64 rng(4);
  const auto p = max_pool_2x2(oracle::random_tensor<double>(Shape4{1, 1, 4, 4}, rng));
  const auto u = unpool_indices(Tensor4<double>(p.output.shape()), p.indices, 4, 4);
  for (double v : u.values()) EXPECT_EQ(v, 0.0);
}

TEST(UnpoolIndices, RandomCaseMatchesScatterOracle) {
  std::mt19937_64 rng(6);
  const auto p = max_pool_2x2(oracle::random_tensor<double>(Shape4{1, 2, 4, 4}, rng));
  const auto v = oracle::random_tensor<double>(p.output.shape(), rng);
  EXPECT_EQ(unpool_indices(v, p.indices, 4, 4), oracle::scatter(v, p.indices));
}

TEST(UnpoolIndices, RejectsOutOfRangeAndShapeMismatch) {
  std::mt19937_64 rng(6);
  auto p = max_pool_2x2(oracle::random_tensor<double>(Shape4{1, 1, 4, 4}, rng));
  EXPECT_THROW(unpool_indices(Tensor4<double>(Shape4{1, 2, 2, 2}), p.indices, 4, 4), ShapeError);
  p.indices.offsets[0] = 15;  // outside window (0,0)
  EXPECT_THROW(unpool_indices(p.output, p.indices, 4, 4), ShapeError);
}

TEST(UnpoolIndices, RepoolingIsIdempotentOnPositiveInputs) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const auto x = oracle::random_tensor<double>(Shape4{2, 3, 6, 8}, rng, 1e-3, 1.0);
    const auto p = max_pool_2x2(x);
    const auto q = max_pool_2x2(unpool_indices(p.output, p.indices, 6, 8));
    EXPECT_EQ(q.output, p.output);
    EXPECT_EQ(q.indices, p.indices);
  }
}

TEST(UnpoolIndices, NegativeMaximumLosesToZeroFill) {
  // The re-pooling identity needs positive maxima: a window whose maximum is
  // negative is beaten by the zeros the unpooling writes around it.
  Tensor4<double> x(Shape4{1, 1, 2, 2}, std::vector<double>{-4, -3, -2, -1});
  const auto p = max_pool_2x2(x);
  const auto q = max_pool_2x2(unpool_indices(p.output, p.indices, 2, 2));
  EXPECT_EQ(q.output[0], 0.0);
  EXPECT_EQ(q.indices.offsets[0], 0u);
}

TEST(UnpoolZeroFill, BlockOneIsIdentity) {
  std::mt19937_64 rng(1);
  const auto x = oracle::random_tensor<double>(Shape4{1, 2, 3, 3}, rng);
  EXPECT_EQ(unpool_zero_fill(x, 1), x);
}

TEST(UnpoolZeroFill, SingleValueTopLeftOfBlock) {
  Tensor4<double> x(Shape4{1, 1, 1, 1}, 7.0);
  EXPECT_EQ(unpool_zero_fill(x, 2), (Tensor4<double>(Shape4{1, 1, 2, 2}, std::vector<double>{7, 0, 0, 0})));
}

TEST(UnpoolZeroFill, RandomMatchesBlockExpansion) {
  std::mt19937_64 rng(12);
  const auto x = oracle::random_tensor<double>(Shape4{2, 3, 2, 2}, rng);
  EXPECT_EQ(unpool_zero_fill(x, 3), oracle::block_expand(x, 3));
}

// --- elementwise and structural --------------------------------------------

TEST(Relu, ClampsNegatives) {
  Tensor4<double> x(Shape4{1, 1, 1, 3}, std::vector<double>{-1, 0, 2});
  EXPECT_EQ(relu(x), (Tensor4<double>(Shape4{1, 1, 1, 3}, std::vector<double>{0, 0, 2})));
}

TEST(Add, ZeroIsIdentityAndShapesMustMatch) {
  std::mt19937_64 rng(3);
  const auto x = oracle::random_tensor<double>(Shape4{1, 2, 3, 3}, rng);
  EXPECT_EQ(add(x, Tensor4<double>(x.shape())), x);
  EXPECT_THROW(add(x, Tensor4<double>(Shape4{1, 2, 3, 4})), ShapeError);
}

TEST(Concat, OrderingMatchesIndexArithmetic) {
  std::mt19937_64 rng(3);
  const auto a = oracle::random_tensor<double>(Shape4{1, 2, 4, 4}, rng);
  const auto b = oracle::random_tensor<double>(Shape4{1, 3, 4, 4}, rng);
  const auto c = concat_channels(a, b);
  ASSERT_EQ(c.shape(), (Shape4{1, 5, 4, 4}));
  for (std::size_t ch = 0; ch < 5; ++ch) {
    for (std::size_t y = 0; y < 4; ++y) {
      for (std::size_t x = 0; x < 4; ++x) {
        EXPECT_EQ(c.at(0, ch, y, x), ch < 2 ? a.at(0, ch, y, x) : b.at(0, ch - 2, y, x));
      }
    }
  }
  EXPECT_THROW(concat_channels(a, Tensor4<double>(Shape4{1, 1, 4, 5})), ShapeError);
}

TEST(Concat, ChannelCountIsAssociative) {
  const Tensor4<float> a(Shape4{2, 1, 3, 3}), b(Shape4{2, 4, 3, 3}), d(Shape4{2, 2, 3, 3});
  EXPECT_EQ(concat_channels(a, concat_channels(b, d)).shape().c, concat_channels(concat_channels(a, b), d).shape().c);
  EXPECT_EQ(concat_channels(a, concat_channels(b, d)), concat_channels(concat_channels(a, b), d));
}

// --- batch normalization ---------------------------------------------------

TEST(BatchNorm, StandardizedInputPassesThrough) {
  // Per channel: values {-1, 1} over (n, h, w) have mean 0 and biased variance 1.
  Tensor4<double> x(Shape4{2, 2, 1, 1}, std::vector<double>{-1, 1, 1, -1});
  BatchNormState<double> s(2);
  const auto y = batch_norm(x, s, Mode::train);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(y[i], x[i], 1e-5);
}

TEST(BatchNorm, ZeroGammaGivesBeta) {
  std::mt19937_64 rng(13);
  const auto x = oracle::random_tensor<double>(Shape4{2, 3, 4, 4}, rng);
  BatchNormState<double> s(3);
  s.gamma.fill(0.0);
  s.beta = Tensor4<double>(Shape4{3, 1, 1, 1}, std::vector<double>{0.5, -1, 2});
  for (Mode mode : {Mode::train, Mode::infer}) {
    const auto y = batch_norm_apply(x, s, mode);
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t n = 0; n < 2; ++n) {
        for (double v : y.plane(n, c)) EXPECT_EQ(v, s.beta[c]);
      }
    }
  }
}

TEST(BatchNorm, TrainModeStandardizesPerChannel) {
  std::mt19937_64 rng(14);
  auto x = oracle::random_tensor<double>(Shape4{3, 2, 5, 5}, rng, -3.0, 7.0);
  BatchNormState<double> s(2);
  BatchNormCache<double> cache;
  batch_norm(x, s, Mode::train, &cache);
  const auto stats = oracle::channel_stats(cache.normalized);
  for (const auto& [mean, var] : stats) {
    EXPECT_NEAR(mean, 0.0, 1e-5);
    EXPECT_NEAR(var, 1.0, 1e-4);  // epsilon shrinks the variance slightly
  }
}

TEST(BatchNorm, RunningStatsFollowMomentumAndStayNonNegative) {
  std::mt19937_64 rng(15);
  const auto x = oracle::random_tensor<double>(Shape4{2, 1, 4, 4}, rng, 1.0, 3.0);
  BatchNormState<double> s(1);
  const auto [mean, var] = oracle::channel_stats(x)[0];
  batch_norm(x, s, Mode::train);
  EXPECT_NEAR(s.running_mean[0], 0.9 * 0.0 + 0.1 * mean, 1e-12);
  EXPECT_NEAR(s.running_var[0], 0.9 * 1.0 + 0.1 * var, 1e-12);
  EXPECT_GE(s.running_var[0], 0.0);
}

TEST(BatchNorm, InferModeUsesRunningStats) {
  Tensor4<double> x(Shape4{1, 1, 1, 2}, std::vector<double>{3, 5});
  BatchNormState<double> s(1);
  s.running_mean[0] = 1.0;
  s.running_var[0] = 4.0;
  const auto y = batch_norm(x, s, Mode::infer);
  EXPECT_NEAR(y[0], (3 - 1) / std::sqrt(4 + 1e-5), 1e-12);
  EXPECT_NEAR(y[1], (5 - 1) / std::sqrt(4 + 1e-5), 1e-12);
  EXPECT_EQ(s.running_mean[0], 1.0);  // infer leaves the state alone
}

TEST(BatchNorm, ChannelMismatchIsRejected) {
  BatchNormState<double> s(3);
  EXPECT_THROW(batch_norm(Tensor4<double>(Shape4{1, 2, 2, 2}), s, Mode::train), ShapeError);
}

// --- finiteness ------------------------------------------------------------

TEST(Ops, FiniteInputsGiveFiniteOutputs) {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    const auto x = oracle::random_tensor<float>(Shape4{1, 2, 4, 4}, rng, -1e3, 1e3);
    KernelBank<float> k(2, 2, 3, 3);
    k.weights = oracle::random_tensor<float>(k.weights.shape(), rng, -10, 10);
    EXPECT_TRUE(conv2d(x, k, 1, 1).all_finite());
    const auto p = max_pool_2x2(x);
    EXPECT_TRUE(p.output.all_finite());
    EXPECT_TRUE(unpool_indices(p.output, p.indices, 4, 4).all_finite());
    EXPECT_TRUE(unpool_zero_fill(x, 2).all_finite());
    EXPECT_TRUE(relu(x).all_finite());
    EXPECT_TRUE(add(x, x).all_finite());
    EXPECT_TRUE(concat_channels(x, x).all_finite());
    BatchNormState<float> s(2);
    EXPECT_TRUE(batch_norm(x, s, Mode::train).all_finite());
    EXPECT_TRUE(batch_norm(x, s, Mode::infer).all_finite());
  }
}

TEST(Tensor, RejectsEmptyExtentsAndWrongValueCount) {
  EXPECT_THROW(Tensor4<float>(Shape4{0, 1, 1, 1}), ShapeError);
  EXPECT_THROW(Tensor4<float>(Shape4{1, 1, 2, 2}, std::vector<float>(3)), ShapeError);
  Tensor4<float> t(Shape4{1, 1, 2, 2});
  EXPECT_FALSE(t.has_grad());
  t.zero_grad();
  EXPECT_EQ(t.grad().size(), t.size());
}
