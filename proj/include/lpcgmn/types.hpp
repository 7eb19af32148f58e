#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace lpcgmn {

using Index = Eigen::Index;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// ---------------------------------------------------------------------------
// Errors

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class RangeError : public Error {
 public:
  using Error::Error;
};

class OutOfBoundsError : public Error {
 public:
  using Error::Error;
};

class LoadError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Mirror index into [0, n) without repeating the edge sample
/// (-1 -> 1, n -> n-2). Valid for any offset; n == 1 maps everything to 0.
inline Index reflect_index(Index i, Index n) {
  if (n == 1) return 0;
  const Index period = 2 * (n - 1);
  Index m = i % period;
  if (m < 0) m += period;
  return m < n ? m : period - m;
}

// ---------------------------------------------------------------------------
// Multi-channel feature map.
//
// Storage is an Eigen matrix of shape (height*width) x channels, so each
// column is one channel plane laid out column-major (pixel (y, x) lives at
// row x*height + y). Read as a token matrix, rows are spatial positions and
// columns are features, which is exactly the d_m x d_n layout attention uses.

template <typename Scalar>
struct FeatureMap {
  Index height = 0;
  Index width = 0;
  Matrix<Scalar> data;

  FeatureMap() = default;
  FeatureMap(Index h, Index w, Index channels) : height(h), width(w), data(Matrix<Scalar>::Zero(h * w, channels)) {}
  FeatureMap(Index h, Index w, Matrix<Scalar> values) : height(h), width(w), data(std::move(values)) {
    if (data.rows() != h * w) throw ShapeError("FeatureMap: data rows must equal height*width");
  }

  [[nodiscard]] Index channels() const { return data.cols(); }
  [[nodiscard]] Index pixels() const { return height * width; }

  /// View of one channel as a (height x width) image.
  auto plane(Index c) { return Eigen::Map<Matrix<Scalar>>(data.col(c).data(), height, width); }
  auto plane(Index c) const { return Eigen::Map<const Matrix<Scalar>>(data.col(c).data(), height, width); }

  static FeatureMap from_planes(const std::vector<Matrix<Scalar>>& planes) {
    if (planes.empty()) throw ShapeError("FeatureMap::from_planes: no planes");
    FeatureMap f(planes.front().rows(), planes.front().cols(), static_cast<Index>(planes.size()));
    for (std::size_t c = 0; c < planes.size(); ++c) {
      if (planes[c].rows() != f.height || planes[c].cols() != f.width)
        throw ShapeError("FeatureMap::from_planes: planes differ in shape");
      f.plane(static_cast<Index>(c)) = planes[c];
    }
    return f;
  }

  template <typename To>
  FeatureMap<To> cast() const {
    return FeatureMap<To>(height, width, data.template cast<To>().eval());
  }
};

// Multiply-accumulate instrumentation. Every learned linear operator
// (convolutions, projections, attention products) adds its MAC count here so
// analytic cost formulas can be checked against what actually ran.
namespace instrument {

inline std::uint64_t& mac_counter() {
  thread_local std::uint64_t count = 0;
  return count;
}

inline void add_macs(std::uint64_t n) { mac_counter() += n; }

class MacScope {
 public:
  MacScope() : start_(mac_counter()) {}
  [[nodiscard]] std::uint64_t count() const { return mac_counter() - start_; }

 private:
  std::uint64_t start_;
};

}  // namespace instrument

}  // namespace lpcgmn
