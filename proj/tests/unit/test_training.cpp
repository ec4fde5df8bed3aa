#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <random>

#include "heightnet/augment.hpp"
#include "heightnet/error.hpp"
#include "heightnet/init.hpp"
#include "heightnet/loss.hpp"
#include "heightnet/nadam.hpp"
#include "heightnet/scene.hpp"
#include "heightnet/trainer.hpp"
#include "heightnet/weights.hpp"
#include "oracles.hpp"

using namespace heightnet;

namespace {

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "heightnet_unit";
  std::filesystem::create_directories(dir);
  return dir / name;
}

NetworkConfig small_net() { return encoder_decoder_config(4, BlockKind::residual, true, 3); }

std::vector<SamplePair> scenes(std::size_t n, std::size_t size = 32) {
  SceneSpec spec;
  spec.rows = spec.cols = size;
  spec.building_count = 2;
  spec.building_min_size = 5;
  spec.building_max_size = 10;
  spec.tree_count = 1;
  spec.seed = 500;
  return generate_pairs(spec, n);
}

std::vector<std::vector<float>> values_of(const Network<float>& net) {
  std::vector<std::vector<float>> out;
  for (const auto& p : net.parameters()) out.emplace_back(p.tensor->values().begin(), p.tensor->values().end());
  return out;
}

}  // namespace

// --- loss ------------------------------------------------------------------

TEST(L1Loss, NonNegativeAndZeroOnlyOnEquality) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const auto a = oracle::random_tensor<double>(Shape4{1, 1, 4, 4}, rng);
    auto b = a;
    EXPECT_EQ(l1_loss(a, b).value, 0.0);
    b[trial % 16] += 1e-3;
    EXPECT_GT(l1_loss(a, b).value, 0.0);
  }
}

TEST(L1Loss, ValueAndSubgradient) {
  Tensor4<double> p(Shape4{1, 1, 1, 4}, std::vector<double>{1, 2, 3, 4});
  Tensor4<double> t(Shape4{1, 1, 1, 4}, std::vector<double>{0, 2, 5, 4.5});
  const auto r = l1_loss(p, t);
  EXPECT_DOUBLE_EQ(r.value, (1 + 0 + 2 + 0.5) / 4);
  EXPECT_EQ(r.grad, (Tensor4<double>(Shape4{1, 1, 1, 4}, std::vector<double>{0.25, 0, -0.25, -0.25})));
  EXPECT_THROW(l1_loss(p, Tensor4<double>(Shape4{1, 1, 2, 2})), ShapeError);
}

// --- initialization ----------------------------------------------------------

TEST(GlorotInit, TruncatedAtTwoSigmaWithZeroMean) {
  const Shape4 shape{100, 100, 1, 1};  // fan_in = fan_out = 100
  const double sigma = std::sqrt(2.0 / 200.0);
  EXPECT_DOUBLE_EQ(glorot_stddev(100, 100), sigma);
  const auto w = glorot_normal_init<double>(shape, 17);
  double sum = 0;
  for (double v : w.values()) {
    EXPECT_LE(std::abs(v), 2 * sigma);
    sum += v;
  }
  const double n = static_cast<double>(w.size());
  EXPECT_LT(std::abs(sum / n), 3 * sigma / std::sqrt(n));
}

TEST(GlorotInit, ConvolutionFansIncludeReceptiveField) {
  const auto w = glorot_normal_init<double>(Shape4{8, 4, 3, 3}, 5);
  const double sigma = std::sqrt(2.0 / (4 * 9 + 8 * 9));
  for (double v : w.values()) EXPECT_LE(std::abs(v), 2 * sigma);
  double mx = 0;
  for (double v : w.values()) mx = std::max(mx, std::abs(v));
  EXPECT_GT(mx, sigma);  // not accidentally using a smaller spread
}

TEST(GlorotInit, DeterministicPerSeed) {
  EXPECT_EQ(glorot_normal_init<float>(Shape4{4, 3, 3, 3}, 9), glorot_normal_init<float>(Shape4{4, 3, 3, 3}, 9));
  EXPECT_NE(glorot_normal_init<float>(Shape4{4, 3, 3, 3}, 9), glorot_normal_init<float>(Shape4{4, 3, 3, 3}, 10));
  EXPECT_THROW(glorot_stddev(0, 3), ConfigError);
}

// --- optimizer ----------------------------------------------------------------

TEST(Nadam, ZeroGradientFromZeroMomentsIsNoOp) {
  std::vector<double> x{0.5, -2.0};
  std::vector<double> g{0.0, 0.0};
  MomentSlot slot;
  OptimizerState st;
  nadam_apply<double>(x, g, slot, nadam_begin_step(st));
  EXPECT_EQ(x, (std::vector<double>{0.5, -2.0}));
}

TEST(Nadam, TwoStepsMatchStraightLineTranscription) {
  const double lr = 2e-5, b1 = 0.9, b2 = 0.999, eps = 1e-8, psi = 0.004;
  const double x0 = 0.3, g1 = 0.7, g2 = -0.2;

  // Step 1.
  const double mu1 = b1 * (1 - 0.5 * std::pow(0.96, 1 * psi));
  const double mu2 = b1 * (1 - 0.5 * std::pow(0.96, 2 * psi));
  const double mu3 = b1 * (1 - 0.5 * std::pow(0.96, 3 * psi));
  double m = (1 - b1) * g1;
  double v = (1 - b2) * g1 * g1;
  double mbar = (1 - mu1) * (g1 / (1 - mu1)) + mu2 * (m / (1 - mu1 * mu2));
  const double x1 = x0 - lr * mbar / (std::sqrt(v / (1 - b2)) + eps);
  // Step 2.
  m = b1 * m + (1 - b1) * g2;
  v = b2 * v + (1 - b2) * g2 * g2;
  mbar = (1 - mu2) * (g2 / (1 - mu1 * mu2)) + mu3 * (m / (1 - mu1 * mu2 * mu3));
  const double x2 = x1 - lr * mbar / (std::sqrt(v / (1 - b2 * b2)) + eps);

  OptimizerState st;
  MomentSlot slot;
  std::vector<double> x{x0};
  std::vector<double> g{g1};
  nadam_apply<double>(x, g, slot, nadam_begin_step(st));
  EXPECT_NEAR(x[0], x1, 1e-15);
  g[0] = g2;
  nadam_apply<double>(x, g, slot, nadam_begin_step(st));
  EXPECT_NEAR(x[0], x2, 1e-15);
  EXPECT_EQ(st.t, 2u);
  EXPECT_NEAR(st.m_schedule, mu1 * mu2, 1e-15);
}

TEST(Nadam, ConstantGradientDescends) {
  for (double g0 : {1.0, -0.01}) {
    OptimizerState st;
    MomentSlot slot;
    std::vector<double> x{0.0};
    std::vector<double> g{g0};
    double prev = 0;
    for (int i = 0; i < 100; ++i) {
      nadam_apply<double>(x, g, slot, nadam_begin_step(st));
      EXPECT_EQ(std::signbit(x[0] - prev), std::signbit(-g0)) << g0 << " step " << i;
      prev = x[0];
    }
  }
}

TEST(Nadam, QuadraticStepBelowStabilityBoundApproachesMinimum) {
  // f(x) = a/2 x^2. From zero moments the first step has magnitude
  // lr * c with c = 1 + (1 - b1) mu_2 / (1 - mu_1 mu_2), independent of |g|,
  // so it cannot overshoot the minimum as long as lr * c < 2 |x0|.
  const NadamParams p;
  const double mu1 = nadam_momentum(p, 1), mu2 = nadam_momentum(p, 2);
  const double c = 1 + (1 - p.beta1) * mu2 / (1 - mu1 * mu2);
  for (double x0 : {1e-4, 0.3, -2.0}) {
    const double bound = 2 * std::abs(x0) / c;
    for (double frac : {1e-3, 0.25, 0.5, 0.99}) {
      OptimizerState st;
      st.params.learning_rate = frac * bound;
      MomentSlot slot;
      std::vector<double> x{x0};
      std::vector<double> g{3.0 * x0};
      nadam_apply<double>(x, g, slot, nadam_begin_step(st));
      EXPECT_LT(std::abs(x[0]), std::abs(x0)) << x0 << " " << frac;
    }
  }
}

TEST(Nadam, NonFiniteGradientIsRejectedBeforeAnyUpdate) {
  auto net = Network<float>::build(small_net());
  const auto before = values_of(net);
  net.zero_grad();
  auto params = net.parameters();
  params.back().tensor->grad()[0] = std::numeric_limits<float>::infinity();
  params.front().tensor->grad()[0] = 1.0f;
  OptimizerState st;
  EXPECT_THROW(nadam_step(params, st), NonFiniteError);
  EXPECT_EQ(values_of(net), before);
  EXPECT_EQ(st.t, 0u);
}

// --- augmentation -------------------------------------------------------------

TEST(Augment, TransformsCompose) {
  std::mt19937_64 rng(3);
  const auto t = oracle::random_tensor<float>(Shape4{1, 3, 5, 5}, rng);
  EXPECT_EQ(rotate90(rotate90(rotate90(rotate90(t)))), t);
  EXPECT_EQ(flip_horizontal(flip_horizontal(t)), t);
  EXPECT_EQ(flip_vertical(flip_vertical(t)), t);
  EXPECT_EQ(rotate270(rotate90(t)), t);
  // Counter-clockwise quarter turn: the top row becomes the left column, read upwards.
  Tensor4<float> s(Shape4{1, 1, 2, 2}, std::vector<float>{1, 2, 3, 4});
  EXPECT_EQ(rotate90(s), (Tensor4<float>(Shape4{1, 1, 2, 2}, std::vector<float>{2, 4, 1, 3})));
  EXPECT_EQ(flip_horizontal(s), (Tensor4<float>(Shape4{1, 1, 2, 2}, std::vector<float>{2, 1, 4, 3})));
  EXPECT_EQ(flip_vertical(s), (Tensor4<float>(Shape4{1, 1, 2, 2}, std::vector<float>{3, 4, 1, 2})));
  EXPECT_THROW(rotate90(Tensor4<float>(Shape4{1, 1, 2, 3})), ShapeError);
}

TEST(Augment, CountFollowsClosedForm) {
  for (std::size_t n : {1u, 2u, 3u, 7u, 8u}) {
    const auto src = scenes(n, 16);
    const auto out = augment(src, 11);
    EXPECT_EQ(out.size(), augmented_count(n));
    EXPECT_EQ(out.size(), 2 * n + 4 * ((n + 1) / 2));
  }
  EXPECT_EQ(augmented_count(840), 3360u);
}

TEST(Augment, InverseTransformRecoversRegisteredPair) {
  const auto src = scenes(5, 16);
  const auto out = augment(src, 4);
  std::size_t flipped_sources = 0;
  std::vector<std::size_t> per_source(src.size());
  for (const auto& a : out) {
    const auto& s = src.at(a.meta.source);
    EXPECT_EQ(invert_transform(a.height, a.meta.transform), s.height);
    EXPECT_EQ(invert_transform(a.image, a.meta.transform), s.image);
    EXPECT_EQ(apply_transform(s.image, a.meta.transform), a.image);
    ++per_source[a.meta.source];
  }
  for (std::size_t c : per_source) {
    EXPECT_TRUE(c == 2 || c == 6);
    flipped_sources += c == 6;
  }
  EXPECT_EQ(flipped_sources, 3u);
}

TEST(Augment, SeedChoosesWhichSourcesFlip) {
  const auto src = scenes(8, 16);
  auto flipped = [&](std::uint64_t seed) {
    std::vector<bool> f(src.size());
    for (const auto& a : augment(src, seed)) f[a.meta.source] = f[a.meta.source] || a.meta.transform == Transform::hflip;
    return f;
  };
  EXPECT_EQ(flipped(1), flipped(1));
  bool differs = false;
  for (std::uint64_t s = 2; s < 10 && !differs; ++s) differs = flipped(s) != flipped(1);
  EXPECT_TRUE(differs);
}

// --- training loop --------------------------------------------------------------

TEST(Split, SeededAndDisjoint) {
  const auto [tr, val] = split_validation(20, 0.1, 5);
  EXPECT_EQ(val.size(), 2u);
  EXPECT_EQ(tr.size(), 18u);
  std::vector<bool> seen(20);
  for (auto i : tr) seen[i] = true;
  for (auto i : val) {
    EXPECT_FALSE(seen[i]);
    seen[i] = true;
  }
  EXPECT_EQ(split_validation(20, 0.1, 5), split_validation(20, 0.1, 5));
  EXPECT_THROW(split_validation(1, 0.1, 5), ConfigError);
}

TEST(Train, ZeroLearningRateKeepsEverythingConstant) {
  // Running statistics still move in train mode, so normalization is off.
  auto cfg = small_net();
  cfg.use_batch_norm = false;
  auto net = Network<float>::build(cfg);
  const auto data = scenes(1);
  TrainRunConfig run;
  run.max_epochs = 3;
  run.optimizer.learning_rate = 0.0;
  const auto before = values_of(net);
  const auto out = train(net, data, {}, run);
  EXPECT_EQ(values_of(net), before);
  ASSERT_EQ(out.history.epochs(), 3u);
  for (std::size_t e = 1; e < 3; ++e) EXPECT_EQ(out.history.train_loss[e], out.history.train_loss[0]);
}

TEST(Train, SameSeedGivesIdenticalHistory) {
  const auto data = scenes(4);
  TrainRunConfig run;
  run.max_epochs = 3;
  run.optimizer.learning_rate = 1e-3;
  auto a = Network<float>::build(small_net());
  auto b = Network<float>::build(small_net());
  const auto ha = train(a, data, run).history;
  const auto hb = train(b, data, run).history;
  EXPECT_EQ(ha.train_loss, hb.train_loss);
  EXPECT_EQ(ha.val_loss, hb.val_loss);
  EXPECT_EQ(ha.best_epoch, hb.best_epoch);
  EXPECT_EQ(values_of(a), values_of(b));
}

TEST(Train, ReturnedNetworkHasMinimumValidationLoss) {
  const auto data = scenes(6);
  TrainRunConfig run;
  run.max_epochs = 8;
  run.patience = 2;
  run.validation_fraction = 0.34;
  run.optimizer.learning_rate = 5e-3;  // large enough that validation loss wanders
  auto net = Network<float>::build(small_net());
  const auto out = train(net, data, run);
  const auto& h = out.history;
  const double best = *std::min_element(h.val_loss.begin(), h.val_loss.end());
  EXPECT_EQ(h.val_loss[h.best_epoch], best);
  const auto [tr, val] = split_validation(data.size(), run.validation_fraction, run.seed);
  std::vector<SamplePair> val_set;
  for (auto i : val) val_set.push_back(data[i]);
  EXPECT_EQ(evaluate_l1(net, val_set), best);
  if (h.stopped_early) EXPECT_EQ(h.epochs() - 1 - h.best_epoch, run.patience);
}

TEST(Train, NonFiniteLossRaisesDivergence) {
  auto data = scenes(2);
  data[0].height[5] = std::numeric_limits<float>::quiet_NaN();
  data[1].height[5] = std::numeric_limits<float>::quiet_NaN();
  auto net = Network<float>::build(small_net());
  TrainRunConfig run;
  run.max_epochs = 1;
  EXPECT_THROW(train(net, data, {}, run), DivergenceError);
}

TEST(Train, MaxStepsStopsMidEpoch) {
  auto net = Network<float>::build(small_net());
  TrainRunConfig run;
  run.max_epochs = 10;
  run.max_steps = 5;
  const auto out = train(net, scenes(3), {}, run);
  EXPECT_EQ(out.history.steps, 5u);
  EXPECT_EQ(out.optimizer.t, 5u);
}

TEST(Train, BatchesStackAlongBatchAxis) {
  auto net = Network<float>::build(small_net());
  TrainRunConfig run;
  run.max_epochs = 1;
  run.batch_size = 2;
  const auto out = train(net, scenes(5), {}, run);
  EXPECT_EQ(out.history.steps, 3u);
}

TEST(Train, CheckpointHoldsNetworkAndOptimizer) {
  const auto path = scratch("ckpt.hnw");
  std::filesystem::remove(path);
  auto net = Network<float>::build(small_net());
  TrainRunConfig run;
  run.max_epochs = 2;
  run.checkpoint = path;
  const auto out = train(net, scenes(3), {}, run);
  ASSERT_TRUE(std::filesystem::exists(path));
  const auto file = read_weight_file(path);
  const auto opt = load_optimizer_state(file);
  ASSERT_TRUE(opt.has_value());
  EXPECT_EQ(opt->t, out.optimizer.t);
  EXPECT_EQ(opt->m_schedule, out.optimizer.m_schedule);
  EXPECT_EQ(load_weights(path).config(), net.config());
}

TEST(Train, InvalidRunConfigIsRejected) {
  auto net = Network<float>::build(small_net());
  TrainRunConfig run;
  run.optimizer.learning_rate = -1;
  EXPECT_THROW(train(net, scenes(2), run), ConfigError);
  run = TrainRunConfig{};
  run.validation_fraction = 1.0;
  EXPECT_THROW(train(net, scenes(2), run), ConfigError);
  EXPECT_THROW(train(net, std::vector<SamplePair>{}, {}, TrainRunConfig{}), ConfigError);
}

TEST(Train, SinglePairOverfitsTinyNetwork) {
  auto net = Network<float>::build(preset_config("tiny"));
  SceneSpec spec;
  spec.seed = 100;
  const auto data = generate_pairs(spec, 1);
  TrainRunConfig run;
  run.optimizer.learning_rate = 1e-3;  // the default 2e-5 is far too slow for this budget
  run.max_epochs = 2000;
  run.max_steps = 2000;
  run.patience = 2000;
  double reached_at = -1;
  run.on_epoch = [&](const EpochRecord& r) {
    if (reached_at < 0 && r.train_loss < 0.02) reached_at = static_cast<double>(r.steps);
  };
  const auto out = train(net, data, {}, run);
  const auto& loss = out.history.train_loss;
  for (std::size_t e = 1; e < 10; ++e) EXPECT_LT(loss[e], loss[e - 1]) << e;
  EXPECT_GE(reached_at, 0.0) << "final " << loss.back();
}
