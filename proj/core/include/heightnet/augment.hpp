#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "heightnet/dataset.hpp"

namespace heightnet {

/// Quarter turn counter-clockwise of every plane; requires square planes.
template <typename T>
Tensor4<T> rotate90(const Tensor4<T>& t);
template <typename T>
Tensor4<T> rotate270(const Tensor4<T>& t);
/// Mirror left-right.
template <typename T>
Tensor4<T> flip_horizontal(const Tensor4<T>& t);
/// Mirror top-bottom.
template <typename T>
Tensor4<T> flip_vertical(const Tensor4<T>& t);

/// `rot90_hflip` means rotate first, then flip.
template <typename T>
Tensor4<T> apply_transform(const Tensor4<T>& t, Transform tr);
template <typename T>
Tensor4<T> invert_transform(const Tensor4<T>& t, Transform tr);

/// Closed-form output size of augment(): 2N + 4 * ceil(N / 2).
std::size_t augmented_count(std::size_t sources) noexcept;

/// Every source emits its original and a 90 degree rotation. After a seeded
/// shuffle, sources landing at even positions also emit horizontal and
/// vertical flips of both, so N sources give 4N variants for even N. Output
/// is grouped per source in input order; image and height always receive the
/// same transform, which is recorded in meta.transform. Non-square patches
/// throw ShapeError.
std::vector<SamplePair> augment(const std::vector<SamplePair>& sources, std::uint64_t seed);

}  // namespace heightnet
