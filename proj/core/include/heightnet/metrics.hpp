#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "heightnet/tensor.hpp"

namespace heightnet {

/// Mean squared and mean absolute difference over every element, in double.
template <typename T>
double mse(const Tensor4<T>& y, const Tensor4<T>& y_hat);
template <typename T>
double mae(const Tensor4<T>& y, const Tensor4<T>& y_hat);

/// Gaussian-window SSIM constants; defaults are the usual 11x11, sigma 1.5,
/// K1 0.01, K2 0.03 on data with dynamic range 1.
struct SsimParams {
  std::size_t window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;

  double c1() const noexcept { return (k1 * dynamic_range) * (k1 * dynamic_range); }
  double c2() const noexcept { return (k2 * dynamic_range) * (k2 * dynamic_range); }
  /// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
  std::vector<double> taps() const;
};

struct SsimResult {
  double mean = 0;
  /// One value per window position fully inside the plane:
  /// (n, c, h - window + 1, w - window + 1).
  Tensor4<double> map;
};

/// Local means, variances and covariance are Gaussian-weighted sums over each
/// window; `mean` averages the map. Throws ShapeError if a plane is smaller
/// than the window.
template <typename T>
SsimResult ssim(const Tensor4<T>& y, const Tensor4<T>& y_hat, const SsimParams& params = {});

/// Not one of the headline metrics: the scale-invariant log error
/// mean(d^2) - mean(d)^2 with d = log(y_hat + offset) - log(y + offset).
/// The offset keeps zero heights finite.
template <typename T>
double scale_invariant_log_error(const Tensor4<T>& y, const Tensor4<T>& y_hat, double offset = 1e-3);

struct PatchMetrics {
  std::size_t id = 0;
  std::size_t row = 0;
  std::size_t col = 0;
  double mse = 0;
  double mae = 0;
  double ssim = 0;
};

/// Global figures are computed over the tiled region only, so the mean of
/// the per-patch MSE (and MAE) equals the global value.
struct EvalReport {
  double mse = 0;
  double mae = 0;
  double ssim = 0;
  double si_log = 0;  // scale_invariant_log_error, reported separately
  std::size_t patch = 0;
  std::size_t rows = 0, cols = 0;           // full raster
  std::size_t remainder_rows = 0;           // bottom rows outside every patch
  std::size_t remainder_cols = 0;           // right columns outside every patch
  std::vector<PatchMetrics> patches;

  /// Tab-separated per-patch table.
  std::string patches_tsv() const;
  /// key = value lines.
  std::string summary() const;
};

/// Non-overlapping row-major patch sweep over (1,1,H,W) rasters.
EvalReport per_patch_eval(const Tensor4<float>& y, const Tensor4<float>& y_hat, std::size_t patch = 256,
                          const SsimParams& params = {});

}  // namespace heightnet
