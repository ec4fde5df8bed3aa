#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "heightnet/tensor.hpp"

namespace heightnet {

struct BinaryMask {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> bits;  // 0 or 1, row-major

  BinaryMask() = default;
  BinaryMask(std::size_t r, std::size_t c) : rows(r), cols(c), bits(r * c, 0) {}

  bool at(std::size_t r, std::size_t c) const noexcept { return bits[r * cols + c] != 0; }
  void set(std::size_t r, std::size_t c, bool v) noexcept { bits[r * cols + c] = v ? 1 : 0; }
  std::size_t count() const noexcept;

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;
};

/// 0 = background; instances are 1..count.
struct LabelMap {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint32_t> labels;
  std::uint32_t count = 0;

  std::uint32_t at(std::size_t r, std::size_t c) const noexcept { return labels[r * cols + c]; }
};

struct SegmentParams {
  double height_threshold = 0.05;      // normalized height
  double vegetation_threshold = 0.1;   // excess-green index
  std::size_t min_area = 50;           // pixels
};

/// height > tau on a (1,1,H,W) raster.
BinaryMask threshold_height(const Tensor4<float>& height, double tau);

/// Excess green 2g - r - b of a (1,3,H,W) image in [0,1]; result (1,1,H,W).
Tensor4<float> vegetation_index(const Tensor4<float>& rgb);

/// mask AND (vi <= tau).
BinaryMask filter_vegetation(const BinaryMask& mask, const Tensor4<float>& vi, double tau);

/// Drops 4-connected foreground components smaller than min_area.
BinaryMask remove_small_areas(const BinaryMask& mask, std::size_t min_area);

/// Background regions not 4-connected to the raster border become foreground.
BinaryMask fill_holes(const BinaryMask& mask);

/// 4-connected components numbered in order of their first pixel in a
/// row-major scan.
LabelMap label_instances(const BinaryMask& mask);

/// threshold -> vegetation filter -> small-area removal -> hole filling ->
/// labeling.
LabelMap segment_buildings(const Tensor4<float>& rgb, const Tensor4<float>& height, const SegmentParams& params = {});

struct InstanceStats {
  std::uint32_t label = 0;
  std::size_t area = 0;
  std::size_t row_min = 0, row_max = 0, col_min = 0, col_max = 0;  // inclusive
  double mean_height = 0;
};

std::vector<InstanceStats> instance_table(const LabelMap& labels, const Tensor4<float>& height);
/// Tab-separated: label, area, row_min, col_min, row_max, col_max, mean_height.
std::string instance_table_tsv(const std::vector<InstanceStats>& table);

/// Intersection over union of two 0/1 masks; two empty masks give 1.
double mask_iou(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b);

}  // namespace heightnet
