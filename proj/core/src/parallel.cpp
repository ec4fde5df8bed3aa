#include "heightnet/parallel.hpp"

#include <algorithm>

#include <Eigen/Core>

namespace heightnet {

namespace {
int g_threads = 1;
}

void set_num_threads(int threads) {
  g_threads = std::max(1, threads);
  Eigen::setNbThreads(g_threads);  // no-op without OpenMP
}

int num_threads() noexcept { return g_threads; }

}  // namespace heightnet
