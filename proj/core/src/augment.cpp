#include "heightnet/augment.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "heightnet/error.hpp"

namespace heightnet {

namespace {

// out(y, x) = in(src(y, x)) for every plane.
template <typename T, typename Map>
Tensor4<T> remap(const Tensor4<T>& t, Map src) {
  const Shape4& s = t.shape();
  Tensor4<T> out(s);
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      for (std::size_t y = 0; y < s.h; ++y) {
        for (std::size_t x = 0; x < s.w; ++x) {
          const auto [sy, sx] = src(y, x);
          out.at(n, c, y, x) = t.at(n, c, sy, sx);
        }
      }
    }
  }
  return out;
}

void require_square(const Shape4& s, const char* what) {
  if (s.h != s.w) throw ShapeError(std::string(what) + ": non-square plane " + s.str());
}

}  // namespace

template <typename T>
Tensor4<T> rotate90(const Tensor4<T>& t) {
  require_square(t.shape(), "rotate90");
  const std::size_t n = t.shape().w;
  return remap(t, [n](std::size_t y, std::size_t x) { return std::pair{x, n - 1 - y}; });
}

template <typename T>
Tensor4<T> rotate270(const Tensor4<T>& t) {
  require_square(t.shape(), "rotate270");
  const std::size_t n = t.shape().h;
  return remap(t, [n](std::size_t y, std::size_t x) { return std::pair{n - 1 - x, y}; });
}

template <typename T>
Tensor4<T> flip_horizontal(const Tensor4<T>& t) {
  const std::size_t w = t.shape().w;
  return remap(t, [w](std::size_t y, std::size_t x) { return std::pair{y, w - 1 - x}; });
}

template <typename T>
Tensor4<T> flip_vertical(const Tensor4<T>& t) {
  const std::size_t h = t.shape().h;
  return remap(t, [h](std::size_t y, std::size_t x) { return std::pair{h - 1 - y, x}; });
}

template <typename T>
Tensor4<T> apply_transform(const Tensor4<T>& t, Transform tr) {
  switch (tr) {
    case Transform::identity: return t;
    case Transform::rot90: return rotate90(t);
    case Transform::hflip: return flip_horizontal(t);
    case Transform::vflip: return flip_vertical(t);
    case Transform::rot90_hflip: return flip_horizontal(rotate90(t));
    case Transform::rot90_vflip: return flip_vertical(rotate90(t));
  }
  return t;
}

template <typename T>
Tensor4<T> invert_transform(const Tensor4<T>& t, Transform tr) {
  switch (tr) {
    case Transform::identity: return t;
    case Transform::rot90: return rotate270(t);
    case Transform::hflip: return flip_horizontal(t);
    case Transform::vflip: return flip_vertical(t);
    case Transform::rot90_hflip: return rotate270(flip_horizontal(t));
    case Transform::rot90_vflip: return rotate270(flip_vertical(t));
  }
  return t;
}

std::size_t augmented_count(std::size_t sources) noexcept { return 2 * sources + 4 * ((sources + 1) / 2); }

std::vector<SamplePair> augment(const std::vector<SamplePair>& sources, std::uint64_t seed) {
  for (const SamplePair& p : sources) {
    require_square(p.image.shape(), "augment");
    require_square(p.height.shape(), "augment");
  }
  std::vector<std::size_t> order(sources.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<bool> flipped(sources.size(), false);
  for (std::size_t pos = 0; pos < order.size(); pos += 2) flipped[order[pos]] = true;

  std::vector<SamplePair> out;
  out.reserve(augmented_count(sources.size()));
  for (std::size_t i = 0; i < sources.size(); ++i) {
    std::vector<Transform> variants{Transform::identity, Transform::rot90};
    if (flipped[i]) {
      variants.insert(variants.end(),
                      {Transform::hflip, Transform::vflip, Transform::rot90_hflip, Transform::rot90_vflip});
    }
    for (Transform tr : variants) {
      SamplePair p{apply_transform(sources[i].image, tr), apply_transform(sources[i].height, tr), sources[i].meta};
      p.meta.transform = tr;
      p.meta.source = i;
      out.push_back(std::move(p));
    }
  }
  return out;
}

#define HEIGHTNET_INSTANTIATE_AUGMENT(T)                          \
  template Tensor4<T> rotate90(const Tensor4<T>&);                \
  template Tensor4<T> rotate270(const Tensor4<T>&);               \
  template Tensor4<T> flip_horizontal(const Tensor4<T>&);         \
  template Tensor4<T> flip_vertical(const Tensor4<T>&);           \
  template Tensor4<T> apply_transform(const Tensor4<T>&, Transform); \
  template Tensor4<T> invert_transform(const Tensor4<T>&, Transform);

HEIGHTNET_INSTANTIATE_AUGMENT(float)
HEIGHTNET_INSTANTIATE_AUGMENT(double)

}  // namespace heightnet
