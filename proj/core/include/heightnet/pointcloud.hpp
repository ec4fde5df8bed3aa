#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>

#include "heightnet/dataset.hpp"
#include "heightnet/tensor.hpp"

namespace heightnet {

/// One "x y z r g b" line per pixel in row-major order: x = col * spacing,
/// y = (rows - 1 - row) * spacing (north up), z = height in meters, colors
/// 0..255. Returns the record count.
std::size_t write_pointcloud(std::ostream& out, const Tensor4<float>& rgb, const Tensor4<float>& height,
                             const HeightMeta& meta);
std::size_t export_pointcloud(const Tensor4<float>& rgb, const Tensor4<float>& height, const HeightMeta& meta,
                              const std::filesystem::path& path);

}  // namespace heightnet
