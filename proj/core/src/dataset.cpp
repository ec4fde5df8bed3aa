#include "heightnet/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "heightnet/error.hpp"

namespace heightnet {

std::vector<TileOrigin> tile_origins(std::size_t rows, std::size_t cols, std::size_t patch, std::size_t stride) {
  if (patch == 0 || stride == 0) throw ConfigError("tile: patch and stride must be positive");
  std::vector<TileOrigin> out;
  for (std::size_t r = 0; r + patch <= rows; r += stride) {
    for (std::size_t c = 0; c + patch <= cols; c += stride) out.push_back({r, c});
  }
  return out;
}

namespace {

Tensor4<float> cut(const Tensor4<float>& src, std::size_t r0, std::size_t c0, std::size_t patch) {
  const Shape4& s = src.shape();
  Tensor4<float> out(Shape4{1, s.c, patch, patch});
  for (std::size_t c = 0; c < s.c; ++c) {
    for (std::size_t y = 0; y < patch; ++y) {
      const float* row = src.data() + src.offset(0, c, r0 + y, c0);
      std::copy(row, row + patch, out.data() + out.offset(0, c, y, 0));
    }
  }
  return out;
}

void paste(Tensor4<float>& dst, const Tensor4<float>& tile, std::size_t r0, std::size_t c0) {
  const Shape4& s = tile.shape();
  for (std::size_t c = 0; c < s.c; ++c) {
    for (std::size_t y = 0; y < s.h; ++y) {
      const float* row = tile.data() + tile.offset(0, c, y, 0);
      std::copy(row, row + s.w, dst.data() + dst.offset(0, c, r0 + y, c0));
    }
  }
}

}  // namespace

std::vector<SamplePair> tile(const Tensor4<float>& image, const Tensor4<float>& height, std::size_t patch,
                             std::size_t stride, const HeightMeta& meta) {
  const Shape4& si = image.shape();
  const Shape4& sh = height.shape();
  if (si.n != 1 || si.c != 3 || sh.n != 1 || sh.c != 1 || si.h != sh.h || si.w != sh.w) {
    throw ShapeError("tile: expected (1,3,H,W) image and (1,1,H,W) height, got " + si.str() + " and " + sh.str());
  }
  std::vector<SamplePair> out;
  for (const TileOrigin& o : tile_origins(si.h, si.w, patch, stride)) {
    SamplePair p{cut(image, o.row, o.col, patch), cut(height, o.row, o.col, patch), {}};
    p.meta.height = meta;
    p.meta.origin_row = o.row;
    p.meta.origin_col = o.col;
    p.meta.source = out.size();
    out.push_back(std::move(p));
  }
  return out;
}

std::pair<Tensor4<float>, Tensor4<float>> untile(const std::vector<SamplePair>& tiles, std::size_t rows,
                                                 std::size_t cols) {
  if (tiles.empty()) throw ShapeError("untile: no tiles");
  const std::size_t patch = tiles.front().image.shape().h;
  const std::size_t out_h = rows / patch * patch, out_w = cols / patch * patch;
  if (tiles.size() != (out_h / patch) * (out_w / patch)) {
    throw ShapeError("untile: " + std::to_string(tiles.size()) + " tiles do not cover " + std::to_string(rows) + "x" +
                     std::to_string(cols) + " at patch " + std::to_string(patch));
  }
  Tensor4<float> image(Shape4{1, 3, out_h, out_w});
  Tensor4<float> height(Shape4{1, 1, out_h, out_w});
  for (const SamplePair& p : tiles) {
    if (p.meta.origin_row + patch > out_h || p.meta.origin_col + patch > out_w) {
      throw ShapeError("untile: tile origin outside the raster");
    }
    paste(image, p.image, p.meta.origin_row, p.meta.origin_col);
    paste(height, p.height, p.meta.origin_row, p.meta.origin_col);
  }
  return {std::move(image), std::move(height)};
}

std::pair<Tensor4<float>, HeightMeta> normalize_height(const Tensor4<float>& dsm_m, double ground_spacing_m) {
  require_finite(dsm_m, "normalize_height");
  const auto [lo, hi] = std::minmax_element(dsm_m.values().begin(), dsm_m.values().end());
  HeightMeta meta;
  meta.height_min_m = *lo;
  meta.height_max_m = *hi;
  meta.ground_spacing_m = ground_spacing_m;
  Tensor4<float> out(dsm_m.shape());
  if (*hi == *lo) {
    meta.flat = true;
    return {std::move(out), meta};
  }
  const double range = meta.height_max_m - meta.height_min_m;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<float>((static_cast<double>(dsm_m[i]) - meta.height_min_m) / range);
  }
  return {std::move(out), meta};
}

Tensor4<float> denormalize_height(const Tensor4<float>& normalized, const HeightMeta& meta) {
  Tensor4<float> out(normalized.shape());
  const double range = meta.flat ? 0.0 : meta.height_max_m - meta.height_min_m;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<float>(meta.height_min_m + static_cast<double>(normalized[i]) * range);
  }
  return out;
}

namespace {

// Mirror index without repeating the edge sample: -1 -> 1, n -> n-2.
std::size_t reflect(std::size_t i, std::size_t n) {
  if (n == 1) return 0;
  const std::size_t period = 2 * (n - 1);
  i %= period;
  return i < n ? i : period - i;
}

}  // namespace

template <typename T>
Padded<T> pad_for_pools(const Tensor4<T>& image, std::size_t pools) {
  const Shape4& s = image.shape();
  const std::size_t m = std::size_t{1} << pools;
  const std::size_t h = (s.h + m - 1) / m * m, w = (s.w + m - 1) / m * m;
  Padded<T> out{Tensor4<T>(Shape4{s.n, s.c, h, w}), CropRecord{s.h, s.w}};
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      for (std::size_t y = 0; y < h; ++y) {
        const std::size_t sy = reflect(y, s.h);
        for (std::size_t x = 0; x < w; ++x) out.tensor.at(n, c, y, x) = image.at(n, c, sy, reflect(x, s.w));
      }
    }
  }
  return out;
}

template <typename T>
Tensor4<T> crop(const Tensor4<T>& t, const CropRecord& record) {
  const Shape4& s = t.shape();
  if (record.rows > s.h || record.cols > s.w || record.rows == 0 || record.cols == 0) {
    throw ShapeError("crop: record " + std::to_string(record.rows) + "x" + std::to_string(record.cols) +
                     " does not fit " + s.str());
  }
  Tensor4<T> out(Shape4{s.n, s.c, record.rows, record.cols});
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      for (std::size_t y = 0; y < record.rows; ++y) {
        const T* row = t.data() + t.offset(n, c, y, 0);
        std::copy(row, row + record.cols, out.data() + out.offset(n, c, y, 0));
      }
    }
  }
  return out;
}

template Padded<float> pad_for_pools(const Tensor4<float>&, std::size_t);
template Padded<double> pad_for_pools(const Tensor4<double>&, std::size_t);
template Tensor4<float> crop(const Tensor4<float>&, const CropRecord&);
template Tensor4<double> crop(const Tensor4<double>&, const CropRecord&);

}  // namespace heightnet
