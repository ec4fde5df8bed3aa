#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include "heightnet/tensor.hpp"

namespace heightnet {

/// Spatial transform applied by augmentation, recorded so it can be undone.
enum class Transform : std::uint8_t { identity, rot90, hflip, vflip, rot90_hflip, rot90_vflip };

/// How a normalized height raster maps back to meters and where it came from.
struct HeightMeta {
  double height_min_m = 0;
  double height_max_m = 1;
  double ground_spacing_m = 0.7;
  bool flat = false;  // max == min; normalized values are all zero
};

struct PairMeta {
  HeightMeta height;
  std::size_t origin_row = 0;
  std::size_t origin_col = 0;
  std::size_t source = 0;  // index of the pre-augmentation pair
  Transform transform = Transform::identity;
};

/// Co-registered RGB patch (1,3,h,w) in [0,1] and normalized height (1,1,h,w).
struct SamplePair {
  Tensor4<float> image;
  Tensor4<float> height;
  PairMeta meta;
};

struct TileOrigin {
  std::size_t row = 0;
  std::size_t col = 0;
  friend bool operator==(const TileOrigin&, const TileOrigin&) = default;
};

/// Row-major origins of every full patch; partial edge tiles are dropped.
std::vector<TileOrigin> tile_origins(std::size_t rows, std::size_t cols, std::size_t patch, std::size_t stride);

/// Cuts co-registered rasters (1,3,H,W) and (1,1,H,W) into patches.
std::vector<SamplePair> tile(const Tensor4<float>& image, const Tensor4<float>& height, std::size_t patch,
                             std::size_t stride, const HeightMeta& meta = {});

/// Reassembles stride == patch tiles into the cropped raster they came from.
std::pair<Tensor4<float>, Tensor4<float>> untile(const std::vector<SamplePair>& tiles, std::size_t rows,
                                                 std::size_t cols);

/// (v - min) / (max - min). A flat raster maps to zeros with `flat` set.
std::pair<Tensor4<float>, HeightMeta> normalize_height(const Tensor4<float>& dsm_m, double ground_spacing_m = 0.7);

Tensor4<float> denormalize_height(const Tensor4<float>& normalized, const HeightMeta& meta);

struct CropRecord {
  std::size_t rows = 0;
  std::size_t cols = 0;
};

template <typename T>
struct Padded {
  Tensor4<T> tensor;
  CropRecord crop;
};

/// Reflect-pads right and bottom up to the next multiple of 2^pools.
template <typename T>
Padded<T> pad_for_pools(const Tensor4<T>& image, std::size_t pools);

/// Top-left (rows, cols) window of every plane.
template <typename T>
Tensor4<T> crop(const Tensor4<T>& t, const CropRecord& record);

}  // namespace heightnet
