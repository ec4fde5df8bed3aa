#include "heightnet/scene.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "heightnet/error.hpp"

namespace heightnet {

namespace {

constexpr float kGround[3] = {0.46f, 0.43f, 0.38f};
constexpr float kTree[3] = {0.20f, 0.52f, 0.18f};
constexpr float kShadowFactor = 0.45f;
constexpr std::size_t kMaxAttempts = 200;

struct Box {
  std::size_t r0, c0, r1, c1;  // half-open
  bool near(const Box& o, std::size_t gap) const {
    return r0 < o.r1 + gap && o.r0 < r1 + gap && c0 < o.c1 + gap && o.c0 < c1 + gap;
  }
};

}  // namespace

void SceneSpec::validate() const {
  if (rows == 0 || cols == 0) throw ConfigError("scene: rows and cols must be positive");
  if (building_min_size == 0 || building_min_size > building_max_size) {
    throw ConfigError("scene: need 1 <= building_min_size <= building_max_size");
  }
  if (tree_min_radius > tree_max_radius) throw ConfigError("scene: tree_min_radius > tree_max_radius");
  if (!(building_min_height <= building_max_height) || building_min_height < 0 || building_max_height > 1) {
    throw ConfigError("scene: building heights must satisfy 0 <= min <= max <= 1");
  }
  if (!(tree_min_height <= tree_max_height) || tree_min_height < 0 || tree_max_height > 1) {
    throw ConfigError("scene: tree heights must satisfy 0 <= min <= max <= 1");
  }
  if (noise < 0 || shadow_px_per_height < 0 || !(height_scale_m > 0) || !(ground_spacing_m > 0)) {
    throw ConfigError("scene: noise and shadow length must be >= 0, scales > 0");
  }
  for (const BuildingSpec& b : buildings) {
    if (b.rows == 0 || b.cols == 0 || b.row + b.rows > rows || b.col + b.cols > cols || b.height < 0 || b.height > 1) {
      throw ConfigError("scene: explicit building outside the raster or with height outside [0,1]");
    }
  }
}

SceneSpec SceneSpec::from_config(const KeyValueFile& f) {
  const char* s = "scene";
  f.require_known(s, {"rows", "cols", "building_count", "building_min_size", "building_max_size",
                      "building_min_height", "building_max_height", "tree_count", "tree_min_radius",
                      "tree_max_radius", "tree_min_height", "tree_max_height", "min_gap", "shadow_azimuth_deg",
                      "shadow_px_per_height", "noise", "height_scale_m", "ground_spacing_m", "seed", "building"});
  SceneSpec d;
  auto size = [&](const char* key, std::size_t fallback) {
    const long long v = f.get_int(s, key, static_cast<long long>(fallback));
    if (v < 0) f.fail(*f.find(s, key), "must be >= 0");
    return static_cast<std::size_t>(v);
  };
  d.rows = size("rows", d.rows);
  d.cols = size("cols", d.cols);
  d.building_count = size("building_count", d.building_count);
  d.building_min_size = size("building_min_size", d.building_min_size);
  d.building_max_size = size("building_max_size", d.building_max_size);
  d.building_min_height = f.get_double(s, "building_min_height", d.building_min_height);
  d.building_max_height = f.get_double(s, "building_max_height", d.building_max_height);
  d.tree_count = size("tree_count", d.tree_count);
  d.tree_min_radius = size("tree_min_radius", d.tree_min_radius);
  d.tree_max_radius = size("tree_max_radius", d.tree_max_radius);
  d.tree_min_height = f.get_double(s, "tree_min_height", d.tree_min_height);
  d.tree_max_height = f.get_double(s, "tree_max_height", d.tree_max_height);
  d.min_gap = size("min_gap", d.min_gap);
  d.shadow_azimuth_deg = f.get_double(s, "shadow_azimuth_deg", d.shadow_azimuth_deg);
  d.shadow_px_per_height = f.get_double(s, "shadow_px_per_height", d.shadow_px_per_height);
  d.noise = f.get_double(s, "noise", d.noise);
  d.height_scale_m = f.get_double(s, "height_scale_m", d.height_scale_m);
  d.ground_spacing_m = f.get_double(s, "ground_spacing_m", d.ground_spacing_m);
  d.seed = static_cast<std::uint64_t>(size("seed", static_cast<std::size_t>(d.seed)));
  for (const auto* e : f.find_all(s, "building")) {
    const auto v = split_whitespace(e->value);
    if (v.size() != 5) f.fail(*e, "expected 'row col rows cols height'");
    try {
      d.buildings.push_back(BuildingSpec{static_cast<std::size_t>(parse_int(v[0])), static_cast<std::size_t>(parse_int(v[1])),
                                         static_cast<std::size_t>(parse_int(v[2])), static_cast<std::size_t>(parse_int(v[3])),
                                         parse_double(v[4])});
    } catch (const ConfigError& err) {
      f.fail(*e, err.what());
    }
  }
  d.validate();
  return d;
}

SceneSpec SceneSpec::load(const std::filesystem::path& path) { return from_config(KeyValueFile::load(path)); }

std::string SceneSpec::to_text() const {
  std::ostringstream o;
  o.precision(17);
  o << "[scene]\nrows = " << rows << "\ncols = " << cols << "\nbuilding_count = " << building_count
    << "\nbuilding_min_size = " << building_min_size << "\nbuilding_max_size = " << building_max_size
    << "\nbuilding_min_height = " << building_min_height << "\nbuilding_max_height = " << building_max_height
    << "\ntree_count = " << tree_count << "\ntree_min_radius = " << tree_min_radius
    << "\ntree_max_radius = " << tree_max_radius << "\ntree_min_height = " << tree_min_height
    << "\ntree_max_height = " << tree_max_height << "\nmin_gap = " << min_gap
    << "\nshadow_azimuth_deg = " << shadow_azimuth_deg << "\nshadow_px_per_height = " << shadow_px_per_height
    << "\nnoise = " << noise << "\nheight_scale_m = " << height_scale_m << "\nground_spacing_m = " << ground_spacing_m
    << "\nseed = " << seed << "\n";
  for (const BuildingSpec& b : buildings) {
    o << "building = " << b.row << " " << b.col << " " << b.rows << " " << b.cols << " " << b.height << "\n";
  }
  return o.str();
}

std::size_t shadow_length(const SceneSpec& spec, double height) noexcept {
  return static_cast<std::size_t>(std::lround(std::max(0.0, spec.shadow_px_per_height * height)));
}

Scene generate_scene(const SceneSpec& spec) {
  spec.validate();
  const std::size_t H = spec.rows, W = spec.cols, N = H * W;
  std::mt19937_64 rng(spec.seed);
  auto uniform_size = [&](std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); };
  auto uniform_real = [&](double lo, double hi) { return lo == hi ? lo : std::uniform_real_distribution<double>(lo, hi)(rng); };

  Scene scene;
  scene.meta = HeightMeta{0.0, spec.height_scale_m, spec.ground_spacing_m, false};
  scene.height = Tensor4<float>(Shape4{1, 1, H, W});
  scene.footprints = LabelMap{H, W, std::vector<std::uint32_t>(N, 0), 0};
  scene.trees = BinaryMask(H, W);
  scene.shadow = BinaryMask(H, W);

  std::vector<Box> occupied;
  auto place_building = [&](const BuildingSpec& b) {
    const auto label = static_cast<std::uint32_t>(scene.buildings.size() + 1);
    const auto h = static_cast<float>(b.height);
    for (std::size_t r = b.row; r < b.row + b.rows; ++r) {
      for (std::size_t c = b.col; c < b.col + b.cols; ++c) {
        float& cell = scene.height.at(0, 0, r, c);
        if (scene.footprints.labels[r * W + c] == 0 || h > cell) {
          cell = h;
          scene.footprints.labels[r * W + c] = label;
        }
      }
    }
    scene.buildings.push_back(b);
    occupied.push_back(Box{b.row, b.col, b.row + b.rows, b.col + b.cols});
  };
  for (const BuildingSpec& b : spec.buildings) place_building(b);

  const std::size_t gap = spec.min_gap;
  for (std::size_t k = 0; k < spec.building_count; ++k) {
    for (std::size_t attempt = 0; attempt < kMaxAttempts; ++attempt) {
      const std::size_t bh = uniform_size(spec.building_min_size, spec.building_max_size);
      const std::size_t bw = uniform_size(spec.building_min_size, spec.building_max_size);
      if (bh + 2 * gap > H || bw + 2 * gap > W) continue;
      const std::size_t r0 = uniform_size(gap, H - gap - bh);
      const std::size_t c0 = uniform_size(gap, W - gap - bw);
      const Box box{r0, c0, r0 + bh, c0 + bw};
      if (std::any_of(occupied.begin(), occupied.end(), [&](const Box& o) { return box.near(o, gap); })) continue;
      place_building(BuildingSpec{r0, c0, bh, bw, uniform_real(spec.building_min_height, spec.building_max_height)});
      break;
    }
  }
  scene.footprints.count = static_cast<std::uint32_t>(scene.buildings.size());

  // Trees: disks whose bounding boxes keep the gap to every other object.
  std::vector<float> tree_height(N, 0.0f);
  for (std::size_t k = 0; k < spec.tree_count; ++k) {
    for (std::size_t attempt = 0; attempt < kMaxAttempts; ++attempt) {
      const std::size_t rad = uniform_size(spec.tree_min_radius, spec.tree_max_radius);
      const std::size_t d = 2 * rad + 1;
      if (d + 2 * gap > H || d + 2 * gap > W) continue;
      const std::size_t r0 = uniform_size(gap, H - gap - d);
      const std::size_t c0 = uniform_size(gap, W - gap - d);
      const Box box{r0, c0, r0 + d, c0 + d};
      if (std::any_of(occupied.begin(), occupied.end(), [&](const Box& o) { return box.near(o, gap); })) continue;
      occupied.push_back(box);
      const auto th = static_cast<float>(uniform_real(spec.tree_min_height, spec.tree_max_height));
      const auto rr = static_cast<long long>(rad);
      for (long long dy = -rr; dy <= rr; ++dy) {
        for (long long dx = -rr; dx <= rr; ++dx) {
          if (dy * dy + dx * dx > rr * rr) continue;
          const std::size_t r = r0 + rad + static_cast<std::size_t>(dy), c = c0 + rad + static_cast<std::size_t>(dx);
          scene.trees.set(r, c, true);
          scene.height.at(0, 0, r, c) = th;
        }
      }
      break;
    }
  }

  // Shadows fall on bare ground only.
  const double az = spec.shadow_azimuth_deg * std::numbers::pi / 180.0;
  for (const BuildingSpec& b : scene.buildings) {
    const std::size_t len = shadow_length(spec, b.height);
    for (std::size_t s = 1; s <= len; ++s) {
      const auto dr = static_cast<long long>(std::lround(static_cast<double>(s) * std::sin(az)));
      const auto dc = static_cast<long long>(std::lround(static_cast<double>(s) * std::cos(az)));
      for (std::size_t r = b.row; r < b.row + b.rows; ++r) {
        for (std::size_t c = b.col; c < b.col + b.cols; ++c) {
          const long long rr = static_cast<long long>(r) + dr, cc = static_cast<long long>(c) + dc;
          if (rr < 0 || cc < 0 || rr >= static_cast<long long>(H) || cc >= static_cast<long long>(W)) continue;
          const std::size_t i = static_cast<std::size_t>(rr) * W + static_cast<std::size_t>(cc);
          if (scene.footprints.labels[i] == 0 && !scene.trees.bits[i]) scene.shadow.bits[i] = 1;
        }
      }
    }
  }

  scene.rgb = Tensor4<float>(Shape4{1, 3, H, W});
  std::normal_distribution<float> noise(0.0f, static_cast<float>(spec.noise));
  for (std::size_t i = 0; i < N; ++i) {
    float px[3];
    if (scene.footprints.labels[i] != 0) {
      const float g = 0.35f + 0.55f * scene.height[i];
      px[0] = px[1] = px[2] = g;
    } else if (scene.trees.bits[i]) {
      std::copy(kTree, kTree + 3, px);
    } else {
      const float f = scene.shadow.bits[i] ? kShadowFactor : 1.0f;
      for (int c = 0; c < 3; ++c) px[c] = kGround[c] * f;
    }
    for (std::size_t c = 0; c < 3; ++c) {
      const float n = spec.noise > 0 ? noise(rng) : 0.0f;
      scene.rgb[c * N + i] = std::clamp(px[c] + n, 0.0f, 1.0f);
    }
  }
  return scene;
}

std::vector<SamplePair> generate_pairs(const SceneSpec& spec, std::size_t count) {
  std::vector<SamplePair> out;
  out.reserve(count);
  SceneSpec s = spec;
  for (std::size_t i = 0; i < count; ++i) {
    s.seed = spec.seed + i;
    Scene scene = generate_scene(s);
    SamplePair p{std::move(scene.rgb), std::move(scene.height), {}};
    p.meta.height = scene.meta;
    p.meta.source = i;
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace heightnet
