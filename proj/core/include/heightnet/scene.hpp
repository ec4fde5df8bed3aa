#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "heightnet/dataset.hpp"
#include "heightnet/kv_config.hpp"
#include "heightnet/segmentation.hpp"
#include "heightnet/tensor.hpp"

namespace heightnet {

/// Axis-aligned rectangle with a flat roof at normalized `height`.
struct BuildingSpec {
  std::size_t row = 0, col = 0;
  std::size_t rows = 1, cols = 1;
  double height = 0.5;
};

/// Synthetic ortho scene. Buildings render as gray roofs whose brightness
/// rises with height (0.35 + 0.55 h) and cast a ground shadow of
/// round(shadow_px_per_height * h) pixels along `shadow_azimuth_deg`
/// (0 = towards +col, 90 = towards +row). Trees are green disks with small
/// heights. Random objects keep `min_gap` pixels from each other and from the
/// border; explicitly listed buildings may overlap, in which case the taller
/// roof wins.
struct SceneSpec {
  std::size_t rows = 64;
  std::size_t cols = 64;
  std::size_t building_count = 3;
  std::size_t building_min_size = 8;
  std::size_t building_max_size = 20;
  double building_min_height = 0.2;
  double building_max_height = 1.0;
  std::size_t tree_count = 2;
  std::size_t tree_min_radius = 2;
  std::size_t tree_max_radius = 4;
  double tree_min_height = 0.08;
  double tree_max_height = 0.2;
  std::size_t min_gap = 3;
  double shadow_azimuth_deg = 135.0;
  double shadow_px_per_height = 10.0;
  double noise = 0.02;
  double height_scale_m = 30.0;
  double ground_spacing_m = 0.7;
  std::uint64_t seed = 1;
  std::vector<BuildingSpec> buildings;  // placed before the random ones

  void validate() const;
  /// Reads the [scene] section; unlisted keys keep their defaults. Explicit
  /// buildings are `building = row col rows cols height` lines.
  static SceneSpec from_config(const KeyValueFile& file);
  static SceneSpec load(const std::filesystem::path& path);
  std::string to_text() const;
};

struct Scene {
  Tensor4<float> rgb;         // (1,3,rows,cols) in [0,1]
  Tensor4<float> height;      // (1,1,rows,cols) normalized
  LabelMap footprints;        // building k occupies label k+1
  BinaryMask trees;
  BinaryMask shadow;
  std::vector<BuildingSpec> buildings;  // everything actually placed
  HeightMeta meta;
};

/// round(shadow_px_per_height * height)
std::size_t shadow_length(const SceneSpec& spec, double height) noexcept;

Scene generate_scene(const SceneSpec& spec);

/// `count` scenes with seeds spec.seed, spec.seed + 1, ... as training pairs.
std::vector<SamplePair> generate_pairs(const SceneSpec& spec, std::size_t count);

}  // namespace heightnet
