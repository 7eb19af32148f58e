#pragma once

// Parameter-free Laplacian pyramid: 5-tap binomial blur with reflect
// borders, decimation by two, and an upsampler that zero-inserts and blurs
// with four times the kernel. reconstruct() inverts decompose() exactly up
// to rounding, since every residual absorbs its own upsampling error.

#include "lpcgmn/metrics.hpp"
#include "lpcgmn/types.hpp"

#include <array>
#include <string>
#include <vector>

namespace lpcgmn::pyramid {

inline constexpr std::array<double, 5> kBinomial5 = {1.0 / 16, 4.0 / 16, 6.0 / 16, 4.0 / 16, 1.0 / 16};

using lpcgmn::reflect_index;

namespace detail {

// out(y, x) = gain * sum_t k[t] * in(reflect(y + t - 2), x)
template <typename Scalar>
Matrix<Scalar> filter_vertical(const Matrix<Scalar>& in, Scalar gain) {
  const Index h = in.rows();
  Matrix<Scalar> out = Matrix<Scalar>::Zero(h, in.cols());
  for (int t = 0; t < 5; ++t) {
    const Scalar w = gain * static_cast<Scalar>(kBinomial5[t]);
    for (Index x = 0; x < in.cols(); ++x)
      for (Index y = 0; y < h; ++y) out(y, x) += w * in(reflect_index(y + t - 2, h), x);
  }
  return out;
}

template <typename Scalar>
Matrix<Scalar> filter_horizontal(const Matrix<Scalar>& in, Scalar gain) {
  const Index w = in.cols();
  Matrix<Scalar> out = Matrix<Scalar>::Zero(in.rows(), w);
  for (int t = 0; t < 5; ++t) {
    const Scalar k = gain * static_cast<Scalar>(kBinomial5[t]);
    for (Index x = 0; x < w; ++x) out.col(x) += k * in.col(reflect_index(x + t - 2, w));
  }
  return out;
}

// Adjoints of the two filters above (scatter instead of gather).
template <typename Scalar>
Matrix<Scalar> filter_vertical_adjoint(const Matrix<Scalar>& g, Scalar gain) {
  const Index h = g.rows();
  Matrix<Scalar> out = Matrix<Scalar>::Zero(h, g.cols());
  for (int t = 0; t < 5; ++t) {
    const Scalar w = gain * static_cast<Scalar>(kBinomial5[t]);
    for (Index x = 0; x < g.cols(); ++x)
      for (Index y = 0; y < h; ++y) out(reflect_index(y + t - 2, h), x) += w * g(y, x);
  }
  return out;
}

template <typename Scalar>
Matrix<Scalar> filter_horizontal_adjoint(const Matrix<Scalar>& g, Scalar gain) {
  const Index w = g.cols();
  Matrix<Scalar> out = Matrix<Scalar>::Zero(g.rows(), w);
  for (int t = 0; t < 5; ++t) {
    const Scalar k = gain * static_cast<Scalar>(kBinomial5[t]);
    for (Index x = 0; x < w; ++x) out.col(reflect_index(x + t - 2, w)) += k * g.col(x);
  }
  return out;
}

}  // namespace detail

template <typename Scalar>
Matrix<Scalar> blur(const Matrix<Scalar>& image) {
  return detail::filter_horizontal(detail::filter_vertical(image, Scalar(1)), Scalar(1));
}

/// Keeps even-indexed rows and columns.
template <typename Scalar>
Matrix<Scalar> downsample(const Matrix<Scalar>& image) {
  const Index h = (image.rows() + 1) / 2;
  const Index w = (image.cols() + 1) / 2;
  Matrix<Scalar> out(h, w);
  for (Index x = 0; x < w; ++x)
    for (Index y = 0; y < h; ++y) out(y, x) = image(2 * y, 2 * x);
  return out;
}

/// Doubles both dimensions: zero insertion followed by a blur with 4x the kernel.
template <typename Scalar>
Matrix<Scalar> upsample(const Matrix<Scalar>& image) {
  Matrix<Scalar> zeros = Matrix<Scalar>::Zero(2 * image.rows(), 2 * image.cols());
  for (Index x = 0; x < image.cols(); ++x)
    for (Index y = 0; y < image.rows(); ++y) zeros(2 * y, 2 * x) = image(y, x);
  return detail::filter_horizontal(detail::filter_vertical(zeros, Scalar(2)), Scalar(2));
}

/// Adjoint of upsample(): maps a gradient on the doubled grid back to the coarse grid.
template <typename Scalar>
Matrix<Scalar> upsample_adjoint(const Matrix<Scalar>& grad) {
  const Matrix<Scalar> g = detail::filter_vertical_adjoint(detail::filter_horizontal_adjoint(grad, Scalar(2)), Scalar(2));
  return downsample(g);
}

template <typename Scalar>
struct PyramidDecomposition {
  std::vector<Matrix<Scalar>> residuals;  // r_0 (finest) ... r_{L-1}
  Matrix<Scalar> base;                    // I_L

  [[nodiscard]] int levels() const { return static_cast<int>(residuals.size()); }
};

inline void check_divisible(Index h, Index w, int levels) {
  if (levels < 1) throw ShapeError("pyramid: levels must be >= 1, got " + std::to_string(levels));
  if (levels > 30) throw ShapeError("pyramid: levels too large");
  const Index unit = Index{1} << levels;
  if (h % unit != 0 || w % unit != 0)
    throw ShapeError("pyramid: image " + std::to_string(h) + "x" + std::to_string(w) + " must be divisible by 2^" +
                     std::to_string(levels) + " = " + std::to_string(unit) + " in both dimensions");
}

template <typename Scalar>
PyramidDecomposition<Scalar> decompose(const Matrix<Scalar>& image, int levels) {
  check_divisible(image.rows(), image.cols(), levels);
  PyramidDecomposition<Scalar> p;
  p.residuals.reserve(static_cast<std::size_t>(levels));
  Matrix<Scalar> current = image;
  for (int l = 0; l < levels; ++l) {
    Matrix<Scalar> coarser = downsample(blur(current));
    p.residuals.push_back(current - upsample(coarser));
    current = std::move(coarser);
  }
  p.base = std::move(current);
  return p;
}

/// One inverse step: finer level from its residual and the coarser level.
template <typename Scalar>
Matrix<Scalar> reconstruct_step(const Matrix<Scalar>& residual, const Matrix<Scalar>& coarser) {
  if (residual.rows() != 2 * coarser.rows() || residual.cols() != 2 * coarser.cols())
    throw ShapeError("pyramid: residual " + std::to_string(residual.rows()) + "x" + std::to_string(residual.cols()) +
                     " does not match coarser level " + std::to_string(coarser.rows()) + "x" +
                     std::to_string(coarser.cols()));
  return residual + upsample(coarser);
}

template <typename Scalar>
Matrix<Scalar> reconstruct(const PyramidDecomposition<Scalar>& p) {
  Matrix<Scalar> current = p.base;
  for (int l = p.levels() - 1; l >= 0; --l) current = reconstruct_step(p.residuals[static_cast<std::size_t>(l)], current);
  return current;
}

// ---------------------------------------------------------------------------
// Per-band comparison of two images.

struct BandMetrics {
  std::string name;  // "r0", "r1", ..., "base"
  Index rows = 0;
  Index cols = 0;
  double mse = 0.0;
  double ssim = 1.0;
  double psnr = metrics::kInfinitePsnr;
  double hist_lo = 0.0;
  double hist_hi = 0.0;
  std::vector<std::uint64_t> hist_a;
  std::vector<std::uint64_t> hist_b;
};

struct BandReport {
  int levels = 0;
  std::vector<BandMetrics> bands;  // residual bands first, base last

  /// True when the base band differs more (by MSE) than every residual band.
  [[nodiscard]] bool low_band_dominant() const {
    if (bands.empty()) return false;
    const double base_mse = bands.back().mse;
    for (std::size_t i = 0; i + 1 < bands.size(); ++i)
      if (!(bands[i].mse < base_mse)) return false;
    return true;
  }
};

namespace detail {

inline BandMetrics compare_band(std::string name, const Matrix<double>& a, const Matrix<double>& b, int bins) {
  BandMetrics m;
  m.name = std::move(name);
  m.rows = a.rows();
  m.cols = a.cols();
  m.mse = metrics::mse(a, b);
  m.ssim = metrics::ssim(a, b);
  m.psnr = metrics::psnr(a, b, 8);
  m.hist_lo = std::min(a.minCoeff(), b.minCoeff());
  m.hist_hi = std::max(a.maxCoeff(), b.maxCoeff());
  m.hist_a.assign(static_cast<std::size_t>(bins), 0);
  m.hist_b.assign(static_cast<std::size_t>(bins), 0);
  const double span = m.hist_hi - m.hist_lo;
  auto bin_of = [&](double v) {
    if (span <= 0.0) return std::size_t{0};
    auto k = static_cast<std::int64_t>((v - m.hist_lo) / span * bins);
    if (k >= bins) k = bins - 1;
    if (k < 0) k = 0;
    return static_cast<std::size_t>(k);
  };
  for (Index i = 0; i < a.size(); ++i) {
    ++m.hist_a[bin_of(a(i))];
    ++m.hist_b[bin_of(b(i))];
  }
  return m;
}

}  // namespace detail

/// Decomposes both images and reports MSE/SSIM/PSNR and histograms per band.
template <typename Scalar>
BandReport band_compare(const Matrix<Scalar>& a, const Matrix<Scalar>& b, int levels, int bins = 32) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("band_compare: shape mismatch");
  const auto pa = decompose<double>(a.template cast<double>(), levels);
  const auto pb = decompose<double>(b.template cast<double>(), levels);
  BandReport report;
  report.levels = levels;
  for (int l = 0; l < levels; ++l) {
    const auto i = static_cast<std::size_t>(l);
    report.bands.push_back(detail::compare_band("r" + std::to_string(l), pa.residuals[i], pb.residuals[i], bins));
  }
  report.bands.push_back(detail::compare_band("base", pa.base, pb.base, bins));
  return report;
}

std::string to_json(const BandReport& report);

}  // namespace lpcgmn::pyramid
