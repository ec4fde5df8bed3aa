#include <gtest/gtest.h>

#include <algorithm>
#include <array>
#include <random>

#include "heightnet/scene.hpp"
#include "heightnet/segmentation.hpp"
#include "oracles.hpp"

using namespace heightnet;

namespace {

Tensor4<float> boxes(std::size_t n, const std::vector<std::array<std::size_t, 4>>& rects, float h = 1.f) {
  Tensor4<float> t(Shape4{1, 1, n, n});
  for (auto [r0, c0, r1, c1] : rects)
    for (std::size_t r = r0; r < r1; ++r)
      for (std::size_t c = c0; c < c1; ++c) t.at(0, 0, r, c) = h;
  return t;
}

BinaryMask random_mask(std::size_t rows, std::size_t cols, double p, std::mt19937_64& rng) {
  BinaryMask m(rows, cols);
  std::bernoulli_distribution d(p);
  for (auto& b : m.bits) b = d(rng) ? 1 : 0;
  return m;
}

std::vector<bool> as_bools(const BinaryMask& m) { return std::vector<bool>(m.bits.begin(), m.bits.end()); }

// Independent flood from the border over background, written as a BFS over
// an explicit queue.
BinaryMask fill_oracle(const BinaryMask& m) {
  BinaryMask reach(m.rows, m.cols);
  std::vector<std::pair<std::size_t, std::size_t>> queue;
  auto push = [&](std::size_t r, std::size_t c) {
    if (!m.at(r, c) && !reach.at(r, c)) {
      reach.set(r, c, true);
      queue.emplace_back(r, c);
    }
  };
  for (std::size_t r = 0; r < m.rows; ++r) {
    push(r, 0);
    push(r, m.cols - 1);
  }
  for (std::size_t c = 0; c < m.cols; ++c) {
    push(0, c);
    push(m.rows - 1, c);
  }
  for (std::size_t head = 0; head < queue.size(); ++head) {
    auto [r, c] = queue[head];
    if (r > 0) push(r - 1, c);
    if (r + 1 < m.rows) push(r + 1, c);
    if (c > 0) push(r, c - 1);
    if (c + 1 < m.cols) push(r, c + 1);
  }
  BinaryMask out(m.rows, m.cols);
  for (std::size_t i = 0; i < out.bits.size(); ++i) out.bits[i] = reach.bits[i] ? 0 : 1;
  return out;
}

}  // namespace

TEST(ThresholdHeight, Examples) {
  EXPECT_EQ(threshold_height(Tensor4<float>(Shape4{1, 1, 8, 8}), 0.1).count(), 0u);
  const auto h = boxes(16, {{1, 1, 4, 5}, {8, 9, 12, 14}});
  const auto m = threshold_height(h, 0.5);
  for (std::size_t r = 0; r < 16; ++r)
    for (std::size_t c = 0; c < 16; ++c) EXPECT_EQ(m.at(r, c), h.at(0, 0, r, c) == 1.f);
  std::mt19937_64 rng(1);
  const auto rnd = oracle::random_tensor<float>(Shape4{1, 1, 9, 7}, rng, 0, 1);
  const auto rm = threshold_height(rnd, 0.3);
  for (std::size_t i = 0; i < rnd.size(); ++i) EXPECT_EQ(rm.bits[i] != 0, rnd[i] > 0.3f);
}

TEST(ThresholdHeight, MonotoneInThreshold) {
  std::mt19937_64 rng(2);
  const auto h = oracle::random_tensor<float>(Shape4{1, 1, 12, 12}, rng, 0, 1);
  for (double lo = 0; lo < 1; lo += 0.1) {
    const auto a = threshold_height(h, lo), b = threshold_height(h, lo + 0.05);
    for (std::size_t i = 0; i < a.bits.size(); ++i) EXPECT_LE(b.bits[i], a.bits[i]);
  }
}

TEST(VegetationIndex, Examples) {
  Tensor4<float> rgb(Shape4{1, 3, 1, 3});
  rgb.at(0, 1, 0, 0) = 1.f;  // pure green
  for (std::size_t c = 0; c < 3; ++c) rgb.at(0, c, 0, 1) = 0.4f;  // gray
  rgb.at(0, 0, 0, 2) = 0.2f;
  rgb.at(0, 1, 0, 2) = 0.7f;
  rgb.at(0, 2, 0, 2) = 0.1f;
  const auto vi = vegetation_index(rgb);
  EXPECT_FLOAT_EQ(vi[0], 2.f);
  EXPECT_FLOAT_EQ(vi[1], 0.f);
  EXPECT_FLOAT_EQ(vi[2], 2 * 0.7f - 0.2f - 0.1f);
  EXPECT_THROW(vegetation_index(Tensor4<float>(Shape4{1, 1, 2, 2})), ShapeError);
}

TEST(FilterVegetation, KeepsOnlyNonVegetation) {
  BinaryMask m(1, 3);
  m.bits = {1, 1, 0};
  Tensor4<float> vi(Shape4{1, 1, 1, 3}, std::vector<float>{0.5f, 0.05f, -1.f});
  const auto f = filter_vegetation(m, vi, 0.1);
  EXPECT_EQ(f.bits, (std::vector<std::uint8_t>{0, 1, 0}));
  std::mt19937_64 rng(3);
  const auto rm = random_mask(6, 6, 0.5, rng);
  const auto rvi = oracle::random_tensor<float>(Shape4{1, 1, 6, 6}, rng, -2, 2);
  const auto rf = filter_vegetation(rm, rvi, 0.1);
  for (std::size_t i = 0; i < rf.bits.size(); ++i) EXPECT_EQ(rf.bits[i] != 0, rm.bits[i] && static_cast<double>(rvi[i]) <= 0.1);
}

TEST(RemoveSmallAreas, DropsSmallComponents) {
  BinaryMask m(5, 5);
  m.set(2, 2, true);
  EXPECT_EQ(remove_small_areas(m, 5).count(), 0u);
  EXPECT_EQ(remove_small_areas(m, 1).count(), 1u);
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const auto rm = random_mask(20, 20, 0.45, rng);
    const auto once = remove_small_areas(rm, 6);
    EXPECT_EQ(remove_small_areas(once, 6), once);
    // Every surviving component has at least 6 pixels.
    const auto lab = label_instances(once);
    std::vector<std::size_t> area(lab.count + 1);
    for (auto l : lab.labels) ++area[l];
    for (std::size_t k = 1; k < area.size(); ++k) EXPECT_GE(area[k], 6u);
  }
}

TEST(FillHoles, RingInteriorIsFilled) {
  BinaryMask ring(7, 7);
  for (std::size_t i = 1; i < 6; ++i) {
    ring.set(1, i, true);
    ring.set(5, i, true);
    ring.set(i, 1, true);
    ring.set(i, 5, true);
  }
  const auto f = fill_holes(ring);
  for (std::size_t r = 1; r < 6; ++r)
    for (std::size_t c = 1; c < 6; ++c) EXPECT_TRUE(f.at(r, c));
  EXPECT_EQ(f.count(), 25u);
}

TEST(FillHoles, MatchesFloodOracleAndIsIdempotent) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const auto m = random_mask(15, 17, 0.55, rng);
    const auto f = fill_holes(m);
    EXPECT_EQ(f, fill_oracle(m));
    EXPECT_EQ(fill_holes(f), f);
  }
}

TEST(LabelInstances, Examples) {
  const auto two = threshold_height(boxes(12, {{1, 1, 4, 4}, {6, 6, 10, 11}}), 0.5);
  const auto lab = label_instances(two);
  EXPECT_EQ(lab.count, 2u);
  EXPECT_EQ(lab.at(1, 1), 1u);
  EXPECT_EQ(lab.at(7, 7), 2u);
  EXPECT_EQ(label_instances(BinaryMask(4, 4)).count, 0u);
  // Diagonal neighbours are separate under 4-connectivity.
  BinaryMask diag(2, 2);
  diag.set(0, 0, true);
  diag.set(1, 1, true);
  EXPECT_EQ(label_instances(diag).count, 2u);
}

TEST(LabelInstances, MatchesUnionFindPartition) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const auto m = random_mask(18, 23, 0.5, rng);
    const auto lab = label_instances(m);
    EXPECT_EQ(lab.count, oracle::count_components(as_bools(m), m.rows, m.cols));
    // Same partition: 4-neighbours share a label iff both are foreground.
    for (std::size_t r = 0; r < m.rows; ++r) {
      for (std::size_t c = 0; c < m.cols; ++c) {
        EXPECT_EQ(lab.at(r, c) != 0, m.at(r, c));
        if (c + 1 < m.cols && m.at(r, c) && m.at(r, c + 1)) EXPECT_EQ(lab.at(r, c), lab.at(r, c + 1));
        if (r + 1 < m.rows && m.at(r, c) && m.at(r + 1, c)) EXPECT_EQ(lab.at(r, c), lab.at(r + 1, c));
      }
    }
    // Labels appear in first-pixel scan order.
    std::uint32_t next = 1;
    for (auto l : lab.labels) {
      if (l == 0) continue;
      EXPECT_LE(l, next);
      if (l == next) ++next;
    }
  }
}

TEST(SegmentBuildings, BoxesAndTreesOfEqualHeight) {
  SceneSpec spec;
  spec.rows = spec.cols = 64;
  spec.building_count = 0;
  spec.tree_count = 0;
  spec.noise = 0;
  spec.buildings = {{5, 5, 12, 12, 0.5}, {30, 8, 10, 14, 0.5}, {40, 40, 15, 12, 0.5}};
  auto scene = generate_scene(spec);
  // Paint two green trees at the same height as the boxes.
  for (auto [r0, c0] : std::vector<std::pair<std::size_t, std::size_t>>{{8, 40}, {50, 10}}) {
    for (std::size_t r = r0; r < r0 + 8; ++r) {
      for (std::size_t c = c0; c < c0 + 8; ++c) {
        scene.rgb.at(0, 0, r, c) = 0.2f;
        scene.rgb.at(0, 1, r, c) = 0.55f;
        scene.rgb.at(0, 2, r, c) = 0.15f;
        scene.height.at(0, 0, r, c) = 0.5f;
      }
    }
  }
  const auto lab = segment_buildings(scene.rgb, scene.height);
  EXPECT_EQ(lab.count, 3u);
  for (std::size_t r = 8; r < 16; ++r)
    for (std::size_t c = 40; c < 48; ++c) EXPECT_EQ(lab.at(r, c), 0u);
}

TEST(SegmentBuildings, AllVegetationGivesNoInstances) {
  Tensor4<float> rgb(Shape4{1, 3, 32, 32});
  for (std::size_t i = 0; i < 32 * 32; ++i) rgb.values()[32 * 32 + i] = 0.9f;  // green channel
  Tensor4<float> h(Shape4{1, 1, 32, 32}, 0.6f);
  EXPECT_EQ(segment_buildings(rgb, h).count, 0u);
}

TEST(SegmentBuildings, RecoversGeneratedFootprints) {
  SceneSpec spec;
  spec.seed = 77;
  const auto scene = generate_scene(spec);
  const auto lab = segment_buildings(scene.rgb, scene.height);
  ASSERT_EQ(lab.count, scene.footprints.count);
  double iou_sum = 0;
  for (std::uint32_t k = 1; k <= scene.footprints.count; ++k) {
    // Match each ground-truth footprint to the predicted label it overlaps most.
    std::vector<std::size_t> votes(lab.count + 1);
    for (std::size_t i = 0; i < lab.labels.size(); ++i)
      if (scene.footprints.labels[i] == k) ++votes[lab.labels[i]];
    const auto best = static_cast<std::uint32_t>(std::max_element(votes.begin() + 1, votes.end()) - votes.begin());
    std::vector<std::uint8_t> a(lab.labels.size()), b(lab.labels.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      a[i] = scene.footprints.labels[i] == k;
      b[i] = lab.labels[i] == best;
    }
    iou_sum += mask_iou(a, b);
  }
  EXPECT_GE(iou_sum / scene.footprints.count, 0.9);
}

TEST(InstanceTable, AreaBoxAndMeanHeight) {
  const auto h = boxes(10, {{2, 3, 4, 7}});
  const auto lab = label_instances(threshold_height(h, 0.5));
  const auto table = instance_table(lab, h);
  ASSERT_EQ(table.size(), 1u);
  EXPECT_EQ(table[0].area, 8u);
  EXPECT_EQ(table[0].row_min, 2u);
  EXPECT_EQ(table[0].row_max, 3u);
  EXPECT_EQ(table[0].col_min, 3u);
  EXPECT_EQ(table[0].col_max, 6u);
  EXPECT_DOUBLE_EQ(table[0].mean_height, 1.0);
  EXPECT_NE(instance_table_tsv(table).find("label"), std::string::npos);
}

TEST(MaskIou, Basics) {
  EXPECT_EQ(mask_iou({0, 0}, {0, 0}), 1.0);
  EXPECT_EQ(mask_iou({1, 1, 0, 0}, {0, 1, 1, 0}), 1.0 / 3.0);
}
