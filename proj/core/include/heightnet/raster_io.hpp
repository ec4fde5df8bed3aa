#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "heightnet/dataset.hpp"
#include "heightnet/tensor.hpp"

// On-disk rasters.
//
// Height raster (.hgt): an ASCII header followed by raw little-endian
// float32 samples in row-major order.
//
//     HNHEIGHT 1
//     rows 64
//     cols 64
//     height_min_m 0
//     height_max_m 30
//     ground_spacing_m 0.7
//     flat 0
//     normalized 1
//     end
//     <rows * cols * 4 bytes>
//
// `normalized 1` means samples are in [0,1] and map to meters through the
// min/max keys; `normalized 0` means samples are meters already.
//
// RGB images are 8-bit PNG or binary PPM (P6), chosen by file extension.
// Scalar maps export as 8-bit PGM (P5) and label maps as 16-bit big-endian
// PGM, both viewable in ordinary image tools.

namespace heightnet {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

/// Writes to a sibling temporary and renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

struct HeightRaster {
  Tensor4<float> height;  // (1,1,rows,cols)
  HeightMeta meta;
  bool normalized = true;
};

void write_height_raster(const std::filesystem::path& path, const HeightRaster& raster);
HeightRaster read_height_raster(const std::filesystem::path& path);

/// (1,3,rows,cols) in [0,1].
Tensor4<float> read_rgb(const std::filesystem::path& path);
/// Values are clamped to [0,1] and rounded to 8 bits.
void write_rgb(const std::filesystem::path& path, const Tensor4<float>& image);

/// Linear map of [lo, hi] onto 0..255, clamped.
void write_pgm8(const std::filesystem::path& path, std::span<const double> values, std::size_t rows,
                std::size_t cols, double lo, double hi);
void write_pgm16(const std::filesystem::path& path, std::span<const std::uint32_t> values, std::size_t rows,
                 std::size_t cols);
std::vector<std::uint32_t> read_pgm16(const std::filesystem::path& path, std::size_t& rows, std::size_t& cols);

}  // namespace heightnet
