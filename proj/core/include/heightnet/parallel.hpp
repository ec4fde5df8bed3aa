#pragma once

#include <cstddef>
#include <cstdint>

namespace heightnet {

/// Number of worker threads for the matrix products inside convolutions.
/// 1 disables intra-op parallelism; only single-threaded runs are promised to
/// be bit-reproducible.
void set_num_threads(int threads);
int num_threads() noexcept;

}  // namespace heightnet
