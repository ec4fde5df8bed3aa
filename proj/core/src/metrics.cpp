#include "heightnet/metrics.hpp"

#include <cmath>
#include <sstream>

#include "heightnet/dataset.hpp"
#include "heightnet/error.hpp"

namespace heightnet {

namespace {

template <typename T>
void require_same(const Tensor4<T>& a, const Tensor4<T>& b, const char* what) {
  if (!(a.shape() == b.shape())) throw ShapeError(std::string(what) + ": shape " + a.shape().str() + " vs " + b.shape().str());
}

// Valid-mode separable filtering of one plane.
std::vector<double> filter_valid(const std::vector<double>& in, std::size_t h, std::size_t w,
                                 const std::vector<double>& taps) {
  const std::size_t k = taps.size();
  const std::size_t oh = h - k + 1, ow = w - k + 1;
  std::vector<double> rows(h * ow);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0;
      for (std::size_t i = 0; i < k; ++i) acc += taps[i] * in[y * w + x + i];
      rows[y * ow + x] = acc;
    }
  }
  std::vector<double> out(oh * ow);
  for (std::size_t y = 0; y < oh; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0;
      for (std::size_t i = 0; i < k; ++i) acc += taps[i] * rows[(y + i) * ow + x];
      out[y * ow + x] = acc;
    }
  }
  return out;
}

}  // namespace

std::vector<double> SsimParams::taps() const {
  if (window == 0 || !(sigma > 0)) throw ConfigError("ssim: window and sigma must be positive");
  std::vector<double> g(window);
  const double mid = (static_cast<double>(window) - 1.0) / 2.0;
  double sum = 0;
  for (std::size_t i = 0; i < window; ++i) {
    const double d = static_cast<double>(i) - mid;
    g[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    sum += g[i];
  }
  for (double& v : g) v /= sum;
  return g;
}

template <typename T>
double mse(const Tensor4<T>& y, const Tensor4<T>& y_hat) {
  require_same(y, y_hat, "mse");
  double acc = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double d = static_cast<double>(y[i]) - static_cast<double>(y_hat[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(y.size());
}

template <typename T>
double mae(const Tensor4<T>& y, const Tensor4<T>& y_hat) {
  require_same(y, y_hat, "mae");
  double acc = 0;
  for (std::size_t i = 0; i < y.size(); ++i) acc += std::abs(static_cast<double>(y[i]) - static_cast<double>(y_hat[i]));
  return acc / static_cast<double>(y.size());
}

template <typename T>
SsimResult ssim(const Tensor4<T>& y, const Tensor4<T>& y_hat, const SsimParams& params) {
  require_same(y, y_hat, "ssim");
  const Shape4& s = y.shape();
  const std::size_t k = params.window;
  if (s.h < k || s.w < k) {
    throw ShapeError("ssim: plane " + std::to_string(s.h) + "x" + std::to_string(s.w) + " is smaller than the " +
                     std::to_string(k) + "x" + std::to_string(k) + " window");
  }
  const std::vector<double> taps = params.taps();
  const double c1 = params.c1(), c2 = params.c2();
  const std::size_t oh = s.h - k + 1, ow = s.w - k + 1;
  SsimResult out{0, Tensor4<double>(Shape4{s.n, s.c, oh, ow})};
  double total = 0;
  std::vector<double> a(s.plane()), b(s.plane()), aa(s.plane()), bb(s.plane()), ab(s.plane());
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      const auto pa = y.plane(n, c);
      const auto pb = y_hat.plane(n, c);
      for (std::size_t i = 0; i < s.plane(); ++i) {
        a[i] = static_cast<double>(pa[i]);
        b[i] = static_cast<double>(pb[i]);
        aa[i] = a[i] * a[i];
        bb[i] = b[i] * b[i];
        ab[i] = a[i] * b[i];
      }
      const auto mu_a = filter_valid(a, s.h, s.w, taps);
      const auto mu_b = filter_valid(b, s.h, s.w, taps);
      const auto e_aa = filter_valid(aa, s.h, s.w, taps);
      const auto e_bb = filter_valid(bb, s.h, s.w, taps);
      const auto e_ab = filter_valid(ab, s.h, s.w, taps);
      auto map = out.map.plane(n, c);
      for (std::size_t i = 0; i < map.size(); ++i) {
        const double var_a = e_aa[i] - mu_a[i] * mu_a[i];
        const double var_b = e_bb[i] - mu_b[i] * mu_b[i];
        const double cov = e_ab[i] - mu_a[i] * mu_b[i];
        map[i] = ((2.0 * mu_a[i] * mu_b[i] + c1) * (2.0 * cov + c2)) /
                 ((mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (var_a + var_b + c2));
        total += map[i];
      }
    }
  }
  out.mean = total / static_cast<double>(out.map.size());
  return out;
}

template <typename T>
double scale_invariant_log_error(const Tensor4<T>& y, const Tensor4<T>& y_hat, double offset) {
  require_same(y, y_hat, "scale_invariant_log_error");
  double sum = 0, sum_sq = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double p = std::max(static_cast<double>(y_hat[i]) + offset, offset);
    const double t = std::max(static_cast<double>(y[i]) + offset, offset);
    const double d = std::log(p) - std::log(t);
    sum += d;
    sum_sq += d * d;
  }
  const double n = static_cast<double>(y.size());
  return sum_sq / n - (sum / n) * (sum / n);
}

std::string EvalReport::patches_tsv() const {
  std::ostringstream out;
  out.precision(9);
  out << "patch\trow\tcol\tmse\tmae\tssim\n";
  for (const PatchMetrics& p : patches) {
    out << p.id << '\t' << p.row << '\t' << p.col << '\t' << p.mse << '\t' << p.mae << '\t' << p.ssim << '\n';
  }
  return out.str();
}

std::string EvalReport::summary() const {
  std::ostringstream out;
  out.precision(9);
  out << "rows = " << rows << "\ncols = " << cols << "\npatch = " << patch << "\npatches = " << patches.size()
      << "\nremainder_rows = " << remainder_rows << "\nremainder_cols = " << remainder_cols << "\nmse = " << mse
      << "\nmae = " << mae << "\nssim = " << ssim << "\nscale_invariant_log_error = " << si_log << "\n";
  return out.str();
}

EvalReport per_patch_eval(const Tensor4<float>& y, const Tensor4<float>& y_hat, std::size_t patch,
                          const SsimParams& params) {
  require_same(y, y_hat, "per_patch_eval");
  const Shape4& s = y.shape();
  if (s.n != 1 || s.c != 1) throw ShapeError("per_patch_eval: expected (1,1,H,W), got " + s.str());
  const auto origins = tile_origins(s.h, s.w, patch, patch);
  if (origins.empty()) {
    throw ShapeError("per_patch_eval: " + std::to_string(s.h) + "x" + std::to_string(s.w) +
                     " raster holds no full " + std::to_string(patch) + " patch");
  }
  EvalReport r;
  r.patch = patch;
  r.rows = s.h;
  r.cols = s.w;
  r.remainder_rows = s.h % patch;
  r.remainder_cols = s.w % patch;
  const CropRecord covered{s.h - r.remainder_rows, s.w - r.remainder_cols};
  const Tensor4<float> yc = crop(y, covered), pc = crop(y_hat, covered);
  r.mse = mse(yc, pc);
  r.mae = mae(yc, pc);
  r.ssim = ssim(yc, pc, params).mean;
  r.si_log = scale_invariant_log_error(yc, pc);

  for (const TileOrigin& o : origins) {
    Tensor4<float> a(Shape4{1, 1, patch, patch}), b(Shape4{1, 1, patch, patch});
    for (std::size_t yy = 0; yy < patch; ++yy) {
      for (std::size_t xx = 0; xx < patch; ++xx) {
        a.at(0, 0, yy, xx) = y.at(0, 0, o.row + yy, o.col + xx);
        b.at(0, 0, yy, xx) = y_hat.at(0, 0, o.row + yy, o.col + xx);
      }
    }
    r.patches.push_back(PatchMetrics{r.patches.size(), o.row, o.col, mse(a, b), mae(a, b), ssim(a, b, params).mean});
  }
  return r;
}

#define HEIGHTNET_INSTANTIATE_METRICS(T)                                                    \
  template double mse(const Tensor4<T>&, const Tensor4<T>&);                                \
  template double mae(const Tensor4<T>&, const Tensor4<T>&);                                \
  template SsimResult ssim(const Tensor4<T>&, const Tensor4<T>&, const SsimParams&);        \
  template double scale_invariant_log_error(const Tensor4<T>&, const Tensor4<T>&, double);

HEIGHTNET_INSTANTIATE_METRICS(float)
HEIGHTNET_INSTANTIATE_METRICS(double)

}  // namespace heightnet
