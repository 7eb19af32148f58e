#pragma once

#include "lpcgmn/types.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>

namespace lpcgmn::metrics {

/// Returned by psnr() when the two images are identical.
inline constexpr double kInfinitePsnr = std::numeric_limits<double>::infinity();

namespace detail {

template <typename A, typename B>
void require_same_shape(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError(std::string(what) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()) + ")");
}

}  // namespace detail

template <typename A, typename B>
double mse(const Eigen::MatrixBase<A>& pred, const Eigen::MatrixBase<B>& ref) {
  detail::require_same_shape(pred, ref, "mse");
  if (pred.size() == 0) return 0.0;
  const auto diff = (pred.template cast<double>() - ref.template cast<double>()).eval();
  return diff.squaredNorm() / static_cast<double>(diff.size());
}

template <typename A, typename B>
double rmse(const Eigen::MatrixBase<A>& pred, const Eigen::MatrixBase<B>& ref) {
  return std::sqrt(mse(pred, ref));
}

/// Error energy over reference energy. Throws RangeError for an all-zero
/// reference, where the ratio is undefined.
template <typename A, typename B>
double nmse(const Eigen::MatrixBase<A>& pred, const Eigen::MatrixBase<B>& ref) {
  detail::require_same_shape(pred, ref, "nmse");
  const auto r = ref.template cast<double>().eval();
  const double energy = r.squaredNorm();
  if (energy == 0.0) throw RangeError("nmse: reference has zero energy");
  return (pred.template cast<double>() - r).squaredNorm() / energy;
}

struct SsimConstants {
  double dynamic_range = 1.0;
  double k1 = 0.01;
  double k2 = 0.03;
  [[nodiscard]] double c1() const { return (k1 * dynamic_range) * (k1 * dynamic_range); }
  [[nodiscard]] double c2() const { return (k2 * dynamic_range) * (k2 * dynamic_range); }
};

/// Global (whole-image) SSIM with population variances and covariance.
///
/// Uses the standard luminance denominator u_a^2 + u_b^2 + C1 and contrast
/// denominator s_a^2 + s_b^2 + C2.
template <typename A, typename B>
double ssim(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b, SsimConstants k = {}) {
  detail::require_same_shape(a, b, "ssim");
  const auto x = a.template cast<double>().eval();
  const auto y = b.template cast<double>().eval();
  const double n = static_cast<double>(x.size());
  const double mx = x.mean();
  const double my = y.mean();
  const double vx = (x.array() - mx).square().sum() / n;
  const double vy = (y.array() - my).square().sum() / n;
  const double cov = ((x.array() - mx) * (y.array() - my)).sum() / n;
  const double c1 = k.c1();
  const double c2 = k.c2();
  return ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
}

/// PSNR in dB for images normalized to [0, 1], evaluated on the
/// (2^bits - 1) integer scale. Identical inputs give kInfinitePsnr.
template <typename A, typename B>
double psnr(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b, int bits = 8) {
  detail::require_same_shape(a, b, "psnr");
  const double peak = std::ldexp(1.0, bits) - 1.0;
  const double e = mse(a, b) * peak * peak;
  if (e == 0.0) return kInfinitePsnr;
  return 20.0 * std::log10(peak / std::sqrt(e));
}

/// Aggregate quality and cost figures for one model on one dataset.
struct MetricReport {
  double mse = 0.0;
  double nmse = 0.0;
  double rmse = 0.0;
  double ssim = 1.0;
  double psnr = kInfinitePsnr;
  std::uint64_t samples = 0;
  std::uint64_t parameters = 0;
  std::uint64_t flops = 0;
  double wall_seconds = 0.0;
};

/// JSON text (full precision; +inf PSNR is written as the string "inf").
std::string to_json(const MetricReport& r);
/// Header and one CSV row, full precision.
std::string csv_header();
std::string to_csv_row(const MetricReport& r);
/// Human-readable table with six significant digits.
std::string to_table(const MetricReport& r);

}  // namespace lpcgmn::metrics
