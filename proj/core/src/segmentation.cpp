#include "heightnet/segmentation.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "heightnet/error.hpp"

namespace heightnet {

std::size_t BinaryMask::count() const noexcept {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

namespace {

void require_plane(const Tensor4<float>& t, std::size_t channels, const char* what) {
  const Shape4& s = t.shape();
  if (s.n != 1 || s.c != channels) {
    throw ShapeError(std::string(what) + ": expected (1," + std::to_string(channels) + ",H,W), got " + s.str());
  }
}

// Visits the 4-connected region of pixels equal to `value` that contains
// `seed`, using an explicit stack, and calls `visit` once per pixel.
template <typename Visit>
void flood(const BinaryMask& m, std::vector<std::uint8_t>& seen, std::size_t seed, std::uint8_t value, Visit visit) {
  std::vector<std::size_t> stack{seed};
  seen[seed] = 1;
  while (!stack.empty()) {
    const std::size_t i = stack.back();
    stack.pop_back();
    visit(i);
    const std::size_t r = i / m.cols, c = i % m.cols;
    auto push = [&](std::size_t j) {
      if (!seen[j] && m.bits[j] == value) {
        seen[j] = 1;
        stack.push_back(j);
      }
    };
    if (r > 0) push(i - m.cols);
    if (r + 1 < m.rows) push(i + m.cols);
    if (c > 0) push(i - 1);
    if (c + 1 < m.cols) push(i + 1);
  }
}

}  // namespace

BinaryMask threshold_height(const Tensor4<float>& height, double tau) {
  require_plane(height, 1, "threshold_height");
  BinaryMask m(height.shape().h, height.shape().w);
  for (std::size_t i = 0; i < height.size(); ++i) m.bits[i] = static_cast<double>(height[i]) > tau ? 1 : 0;
  return m;
}

Tensor4<float> vegetation_index(const Tensor4<float>& rgb) {
  require_plane(rgb, 3, "vegetation_index");
  const Shape4& s = rgb.shape();
  Tensor4<float> out(Shape4{1, 1, s.h, s.w});
  const auto r = rgb.plane(0, 0), g = rgb.plane(0, 1), b = rgb.plane(0, 2);
  for (std::size_t i = 0; i < s.plane(); ++i) out[i] = 2.0f * g[i] - r[i] - b[i];
  return out;
}

BinaryMask filter_vegetation(const BinaryMask& mask, const Tensor4<float>& vi, double tau) {
  require_plane(vi, 1, "filter_vegetation");
  if (vi.shape().h != mask.rows || vi.shape().w != mask.cols) throw ShapeError("filter_vegetation: size mismatch");
  BinaryMask out = mask;
  for (std::size_t i = 0; i < out.bits.size(); ++i) {
    if (static_cast<double>(vi[i]) > tau) out.bits[i] = 0;
  }
  return out;
}

BinaryMask remove_small_areas(const BinaryMask& mask, std::size_t min_area) {
  BinaryMask out = mask;
  std::vector<std::uint8_t> seen(mask.bits.size(), 0);
  std::vector<std::size_t> component;
  for (std::size_t i = 0; i < mask.bits.size(); ++i) {
    if (seen[i] || !mask.bits[i]) continue;
    component.clear();
    flood(mask, seen, i, 1, [&](std::size_t j) { component.push_back(j); });
    if (component.size() < min_area) {
      for (std::size_t j : component) out.bits[j] = 0;
    }
  }
  return out;
}

BinaryMask fill_holes(const BinaryMask& mask) {
  std::vector<std::uint8_t> seen(mask.bits.size(), 0);
  std::vector<std::uint8_t> outside(mask.bits.size(), 0);
  auto seed_from = [&](std::size_t r, std::size_t c) {
    const std::size_t i = r * mask.cols + c;
    if (!seen[i] && !mask.bits[i]) flood(mask, seen, i, 0, [&](std::size_t j) { outside[j] = 1; });
  };
  for (std::size_t c = 0; c < mask.cols; ++c) {
    seed_from(0, c);
    seed_from(mask.rows - 1, c);
  }
  for (std::size_t r = 0; r < mask.rows; ++r) {
    seed_from(r, 0);
    seed_from(r, mask.cols - 1);
  }
  BinaryMask out = mask;
  for (std::size_t i = 0; i < out.bits.size(); ++i) out.bits[i] = outside[i] ? 0 : 1;
  return out;
}

LabelMap label_instances(const BinaryMask& mask) {
  LabelMap out{mask.rows, mask.cols, std::vector<std::uint32_t>(mask.bits.size(), 0), 0};
  std::vector<std::uint8_t> seen(mask.bits.size(), 0);
  for (std::size_t i = 0; i < mask.bits.size(); ++i) {
    if (seen[i] || !mask.bits[i]) continue;
    const std::uint32_t label = ++out.count;
    flood(mask, seen, i, 1, [&](std::size_t j) { out.labels[j] = label; });
  }
  return out;
}

LabelMap segment_buildings(const Tensor4<float>& rgb, const Tensor4<float>& height, const SegmentParams& params) {
  if (rgb.shape().h != height.shape().h || rgb.shape().w != height.shape().w) {
    throw ShapeError("segment_buildings: image " + rgb.shape().str() + " and height " + height.shape().str() +
                     " are not co-registered");
  }
  BinaryMask m = threshold_height(height, params.height_threshold);
  m = filter_vegetation(m, vegetation_index(rgb), params.vegetation_threshold);
  m = remove_small_areas(m, params.min_area);
  m = fill_holes(m);
  return label_instances(m);
}

std::vector<InstanceStats> instance_table(const LabelMap& labels, const Tensor4<float>& height) {
  require_plane(height, 1, "instance_table");
  if (height.shape().h != labels.rows || height.shape().w != labels.cols) throw ShapeError("instance_table: size mismatch");
  std::vector<InstanceStats> t(labels.count);
  for (std::uint32_t k = 0; k < labels.count; ++k) {
    t[k].label = k + 1;
    t[k].row_min = labels.rows;
    t[k].col_min = labels.cols;
  }
  for (std::size_t r = 0; r < labels.rows; ++r) {
    for (std::size_t c = 0; c < labels.cols; ++c) {
      const std::uint32_t l = labels.at(r, c);
      if (l == 0) continue;
      InstanceStats& s = t[l - 1];
      ++s.area;
      s.row_min = std::min(s.row_min, r);
      s.row_max = std::max(s.row_max, r);
      s.col_min = std::min(s.col_min, c);
      s.col_max = std::max(s.col_max, c);
      s.mean_height += static_cast<double>(height.at(0, 0, r, c));
    }
  }
  for (InstanceStats& s : t) {
    if (s.area > 0) s.mean_height /= static_cast<double>(s.area);
  }
  return t;
}

std::string instance_table_tsv(const std::vector<InstanceStats>& table) {
  std::ostringstream out;
  out.precision(9);
  out << "label\tarea\trow_min\tcol_min\trow_max\tcol_max\tmean_height\n";
  for (const InstanceStats& s : table) {
    out << s.label << '\t' << s.area << '\t' << s.row_min << '\t' << s.col_min << '\t' << s.row_max << '\t'
        << s.col_max << '\t' << s.mean_height << '\n';
  }
  return out.str();
}

double mask_iou(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b) {
  if (a.size() != b.size()) throw ShapeError("mask_iou: size mismatch");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    inter += (a[i] && b[i]) ? 1 : 0;
    uni += (a[i] || b[i]) ? 1 : 0;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace heightnet
