#include "heightnet/pointcloud.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>

#include "heightnet/error.hpp"
#include "heightnet/raster_io.hpp"

namespace heightnet {

std::size_t write_pointcloud(std::ostream& out, const Tensor4<float>& rgb, const Tensor4<float>& height,
                             const HeightMeta& meta) {
  const Shape4& s = height.shape();
  if (s.n != 1 || s.c != 1 || !(rgb.shape() == Shape4{1, 3, s.h, s.w})) {
    throw ShapeError("export_pointcloud: image " + rgb.shape().str() + " and height " + s.str() +
                     " are not co-registered");
  }
  const Tensor4<float> z = denormalize_height(height, meta);
  auto byte = [](float v) { return static_cast<int>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)); };
  for (std::size_t r = 0; r < s.h; ++r) {
    for (std::size_t c = 0; c < s.w; ++c) {
      out << static_cast<double>(c) * meta.ground_spacing_m << ' '
          << static_cast<double>(s.h - 1 - r) * meta.ground_spacing_m << ' ' << z.at(0, 0, r, c) << ' '
          << byte(rgb.at(0, 0, r, c)) << ' ' << byte(rgb.at(0, 1, r, c)) << ' ' << byte(rgb.at(0, 2, r, c)) << '\n';
    }
  }
  return s.h * s.w;
}

std::size_t export_pointcloud(const Tensor4<float>& rgb, const Tensor4<float>& height, const HeightMeta& meta,
                              const std::filesystem::path& path) {
  std::ostringstream out;
  out.precision(9);
  const std::size_t n = write_pointcloud(out, rgb, height, meta);
  write_text_atomic(path, out.str());
  return n;
}

}  // namespace heightnet
