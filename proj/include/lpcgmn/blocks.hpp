#pragma once

// Convolution building blocks with hand-written backward passes, plus the
// closed-form parameter / FLOP / receptive-field calculators.
//
// Layers cache what their backward pass needs during forward(), so a
// forward() must be followed by at most one backward() before the next
// forward(). Gradients accumulate into Param::grad until zero_grad().

#include "lpcgmn/rng.hpp"
#include "lpcgmn/types.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

namespace lpcgmn {

template <typename Scalar>
struct Param {
  Matrix<Scalar> value;
  Matrix<Scalar> grad;

  Param() = default;
  Param(Index rows, Index cols) : value(Matrix<Scalar>::Zero(rows, cols)), grad(Matrix<Scalar>::Zero(rows, cols)) {}

  [[nodiscard]] Index size() const { return value.size(); }
  void zero_grad() { grad.setZero(); }
  void fill_uniform(Rng& rng, double bound) {
    for (Index i = 0; i < value.size(); ++i) value(i) = static_cast<Scalar>(rng.uniform(-bound, bound));
  }
};

/// Sums the sizes of every parameter a module visits.
template <typename Module>
Index parameter_count(Module& m) {
  Index n = 0;
  m.visit("", [&](const std::string&, auto& p) { n += p.size(); });
  return n;
}

template <typename Module>
void zero_grad(Module& m) {
  m.visit("", [](const std::string&, auto& p) { p.zero_grad(); });
}

namespace blocks {

// ---------------------------------------------------------------------------
// Cost calculators

struct ConvSpec {
  int kernel = 3;
  int in_channels = 1;
  int out_channels = 1;
  int dilation = 1;
  int stride = 1;
  Index h_in = 1;
  Index w_in = 1;
  Index h_out = 1;
  Index w_out = 1;

  /// Reflect same-padding: out = ceil(in / stride).
  static ConvSpec same(int kernel, int c_in, int c_out, int dilation, int stride, Index h, Index w) {
    ConvSpec s{kernel, c_in, c_out, dilation, stride, h, w, (h + stride - 1) / stride, (w + stride - 1) / stride};
    s.validate();
    return s;
  }

  void validate() const {
    if (kernel < 1 || dilation < 1 || stride < 1) throw RangeError("ConvSpec: kernel, dilation and stride must be >= 1");
    if (in_channels < 1 || out_channels < 1) throw RangeError("ConvSpec: channel counts must be >= 1");
    if (h_in < 1 || w_in < 1) throw RangeError("ConvSpec: empty input");
    if (h_out != (h_in + stride - 1) / stride || w_out != (w_in + stride - 1) / stride)
      throw ShapeError("ConvSpec: out_shape inconsistent with same-padding at stride " + std::to_string(stride));
  }
};

/// c_out * k^2 * c_in
inline double n_standard(const ConvSpec& s) { return double(s.out_channels) * s.kernel * s.kernel * s.in_channels; }
/// (k^2 + c_out) * c_in
inline double n_separable(const ConvSpec& s) { return (double(s.kernel) * s.kernel + s.out_channels) * s.in_channels; }

inline double param_ratio(const ConvSpec& s) { return 1.0 / s.out_channels + 1.0 / (double(s.kernel) * s.kernel); }

/// k^2 * c_in * w_out * h_out * c_out
inline double flops_standard(const ConvSpec& s) {
  return double(s.kernel) * s.kernel * s.in_channels * double(s.h_out * s.w_out) * s.out_channels;
}
/// k^2 * h_in * w_in * c_in + c_in * h_out * w_out * c_out
inline double flops_separable(const ConvSpec& s) {
  return double(s.kernel) * s.kernel * double(s.h_in * s.w_in) * s.in_channels +
         double(s.in_channels) * double(s.h_out * s.w_out) * s.out_channels;
}

inline double flops_ratio(const ConvSpec& s) {
  return double(s.h_in * s.w_in) / (double(s.h_out * s.w_out) * s.out_channels) + 1.0 / (double(s.kernel) * s.kernel);
}

/// k' = k + (k - 1)(d - 1)
inline int effective_kernel(int k, int d) {
  if (k < 1 || d < 1) throw RangeError("effective_kernel: k and d must be >= 1");
  return k + (k - 1) * (d - 1);
}

/// RF_1 = 1, RF_{i+1} = RF_i + (k'_i - 1) * S_i where S_i is the product of
/// the strides of all earlier layers.
inline long long receptive_field(const std::vector<ConvSpec>& layers) {
  if (layers.empty()) throw RangeError("receptive_field: empty layer list");
  long long rf = 1;
  long long jump = 1;
  for (const auto& l : layers) {
    rf += static_cast<long long>(effective_kernel(l.kernel, l.dilation) - 1) * jump;
    jump *= l.stride;
  }
  return rf;
}

/// y[n] = sum_{k=1..K} x[n + k d] w[k], reflect at both ends.
template <typename Scalar>
Vector<Scalar> dilated_conv_1d(const Vector<Scalar>& x, const Vector<Scalar>& w, int d) {
  if (d < 1) throw RangeError("dilated_conv_1d: dilation must be >= 1");
  const Index n = x.size();
  Vector<Scalar> y = Vector<Scalar>::Zero(n);
  if (n == 0) return y;
  for (Index i = 0; i < n; ++i)
    for (Index k = 1; k <= w.size(); ++k) y(i) += x(reflect_index(i + k * d, n)) * w(k - 1);
  return y;
}

// ---------------------------------------------------------------------------
// Shifted plane kernels, planes column-major h x w.

namespace detail {

// out(i, j) += a * in(reflect(i + dy), reflect(j + dx))
template <typename Scalar>
void shift_axpy(Scalar* out, const Scalar* in, Index h, Index w, Index dy, Index dx, Scalar a) {
  const Index lo = std::min(std::max<Index>(-dy, 0), h);
  const Index hi = std::max<Index>(std::min(h, h - dy), lo);
  for (Index j = 0; j < w; ++j) {
    const Scalar* src = in + reflect_index(j + dx, w) * h;
    Scalar* dst = out + j * h;
    for (Index i = 0; i < lo; ++i) dst[i] += a * src[reflect_index(i + dy, h)];
    for (Index i = lo; i < hi; ++i) dst[i] += a * src[i + dy];
    for (Index i = hi; i < h; ++i) dst[i] += a * src[reflect_index(i + dy, h)];
  }
}

// out(reflect(i + dy), reflect(j + dx)) += a * in(i, j)
template <typename Scalar>
void shift_axpy_adjoint(Scalar* out, const Scalar* in, Index h, Index w, Index dy, Index dx, Scalar a) {
  const Index lo = std::min(std::max<Index>(-dy, 0), h);
  const Index hi = std::max<Index>(std::min(h, h - dy), lo);
  for (Index j = 0; j < w; ++j) {
    Scalar* dst = out + reflect_index(j + dx, w) * h;
    const Scalar* src = in + j * h;
    for (Index i = 0; i < lo; ++i) dst[reflect_index(i + dy, h)] += a * src[i];
    for (Index i = lo; i < hi; ++i) dst[i + dy] += a * src[i];
    for (Index i = hi; i < h; ++i) dst[reflect_index(i + dy, h)] += a * src[i];
  }
}

// sum_{i,j} g(i, j) * in(reflect(i + dy), reflect(j + dx))
template <typename Scalar>
Scalar shift_dot(const Scalar* g, const Scalar* in, Index h, Index w, Index dy, Index dx) {
  const Index lo = std::min(std::max<Index>(-dy, 0), h);
  const Index hi = std::max<Index>(std::min(h, h - dy), lo);
  Scalar acc = 0;
  for (Index j = 0; j < w; ++j) {
    const Scalar* src = in + reflect_index(j + dx, w) * h;
    const Scalar* gj = g + j * h;
    Scalar part = 0;
    for (Index i = 0; i < lo; ++i) part += gj[i] * src[reflect_index(i + dy, h)];
    for (Index i = lo; i < hi; ++i) part += gj[i] * src[i + dy];
    for (Index i = hi; i < h; ++i) part += gj[i] * src[reflect_index(i + dy, h)];
    acc += part;
  }
  return acc;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Layers

/// 1x1 convolution (a dense layer over channels): Y = X W + b.
template <typename Scalar>
class PointwiseConv {
 public:
  PointwiseConv() = default;
  PointwiseConv(Index in, Index out, bool bias = true) : weight_(in, out), bias_(1, bias ? out : 0), has_bias_(bias) {}

  void init(Rng& rng) { weight_.fill_uniform(rng, 1.0 / std::sqrt(double(weight_.value.rows()))); }

  [[nodiscard]] Index in_channels() const { return weight_.value.rows(); }
  [[nodiscard]] Index out_channels() const { return weight_.value.cols(); }
  [[nodiscard]] bool has_bias() const { return has_bias_; }

  Matrix<Scalar> forward(const Matrix<Scalar>& x) {
    if (x.cols() != in_channels())
      throw ShapeError("PointwiseConv: expected " + std::to_string(in_channels()) + " channels, got " +
                       std::to_string(x.cols()));
    x_ = x;
    return apply(x);
  }

  /// Forward without caching.
  [[nodiscard]] Matrix<Scalar> apply(const Matrix<Scalar>& x) const {
    instrument::add_macs(static_cast<std::uint64_t>(x.rows() * in_channels() * out_channels()));
    Matrix<Scalar> y = x * weight_.value;
    if (has_bias_) y.rowwise() += bias_.value.row(0);
    return y;
  }

  Matrix<Scalar> backward(const Matrix<Scalar>& dy) {
    weight_.grad.noalias() += x_.transpose() * dy;
    if (has_bias_) bias_.grad.row(0) += dy.colwise().sum();
    return dy * weight_.value.transpose();
  }

  FeatureMap<Scalar> forward(const FeatureMap<Scalar>& x) { return {x.height, x.width, forward(x.data)}; }
  FeatureMap<Scalar> backward(const FeatureMap<Scalar>& dy) { return {dy.height, dy.width, backward(dy.data)}; }

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + "weight", weight_);
    if (has_bias_) f(prefix + "bias", bias_);
  }

  Param<Scalar>& weight() { return weight_; }
  Param<Scalar>& bias() { return bias_; }

 private:
  Param<Scalar> weight_;
  Param<Scalar> bias_;
  bool has_bias_ = true;
  Matrix<Scalar> x_;
};

/// Per-channel k x k dilated convolution with reflect same-padding, no bias.
/// Weight is (k*k) x C; tap t = a + k*b covers row offset (a - k/2) d and
/// column offset (b - k/2) d.
template <typename Scalar>
class DepthwiseDilatedConv {
 public:
  DepthwiseDilatedConv() = default;
  DepthwiseDilatedConv(Index channels, int dilation, int kernel = 3)
      : weight_(Index{kernel} * kernel, channels), kernel_(kernel), dilation_(dilation) {
    if (kernel < 1 || kernel % 2 == 0) throw RangeError("DepthwiseDilatedConv: kernel must be odd and >= 1");
    if (dilation < 1) throw RangeError("DepthwiseDilatedConv: dilation must be >= 1");
  }

  void init(Rng& rng) { weight_.fill_uniform(rng, 1.0 / kernel_); }

  [[nodiscard]] int dilation() const { return dilation_; }
  [[nodiscard]] int kernel() const { return kernel_; }

  FeatureMap<Scalar> forward(const FeatureMap<Scalar>& x) {
    x_ = x;
    return apply(x);
  }

  [[nodiscard]] FeatureMap<Scalar> apply(const FeatureMap<Scalar>& x) const {
    if (x.channels() != weight_.value.cols()) throw ShapeError("DepthwiseDilatedConv: channel mismatch");
    FeatureMap<Scalar> y(x.height, x.width, x.channels());
    const int half = kernel_ / 2;
    for (Index c = 0; c < x.channels(); ++c)
      for (int b = 0; b < kernel_; ++b)
        for (int a = 0; a < kernel_; ++a)
          detail::shift_axpy(y.data.col(c).data(), x.data.col(c).data(), x.height, x.width, Index{a - half} * dilation_,
                             Index{b - half} * dilation_, weight_.value(a + kernel_ * b, c));
    instrument::add_macs(static_cast<std::uint64_t>(weight_.value.rows() * x.data.size()));
    return y;
  }

  FeatureMap<Scalar> backward(const FeatureMap<Scalar>& dy) {
    FeatureMap<Scalar> dx(dy.height, dy.width, dy.channels());
    const int half = kernel_ / 2;
    for (Index c = 0; c < dy.channels(); ++c)
      for (int b = 0; b < kernel_; ++b)
        for (int a = 0; a < kernel_; ++a) {
          const Index oy = Index{a - half} * dilation_;
          const Index ox = Index{b - half} * dilation_;
          const Index t = a + kernel_ * b;
          weight_.grad(t, c) += detail::shift_dot(dy.data.col(c).data(), x_.data.col(c).data(), dy.height, dy.width, oy, ox);
          detail::shift_axpy_adjoint(dx.data.col(c).data(), dy.data.col(c).data(), dy.height, dy.width, oy, ox,
                                     weight_.value(t, c));
        }
    return dx;
  }

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + "weight", weight_);
  }

  Param<Scalar>& weight() { return weight_; }

 private:
  Param<Scalar> weight_;
  int kernel_ = 3;
  int dilation_ = 1;
  FeatureMap<Scalar> x_;
};

/// Per-instance, per-channel normalization over pixels with learnable affine.
template <typename Scalar>
class InstanceNorm {
 public:
  static constexpr double kEps = 1e-5;

  InstanceNorm() = default;
  explicit InstanceNorm(Index channels) : gamma_(1, channels), beta_(1, channels) { gamma_.value.setOnes(); }

  Matrix<Scalar> forward(const Matrix<Scalar>& x) {
    const auto n = static_cast<Scalar>(x.rows());
    const RowVector<Scalar> mean = x.colwise().sum() / n;
    xhat_ = x.rowwise() - mean;
    inv_std_ = ((xhat_.array().square().colwise().sum() / n) + Scalar(kEps)).rsqrt().matrix();
    xhat_ = xhat_ * inv_std_.asDiagonal();
    Matrix<Scalar> y = xhat_ * gamma_.value.row(0).asDiagonal();
    y.rowwise() += beta_.value.row(0);
    return y;
  }

  Matrix<Scalar> backward(const Matrix<Scalar>& dy) {
    const auto n = static_cast<Scalar>(dy.rows());
    gamma_.grad.row(0) += (dy.array() * xhat_.array()).colwise().sum().matrix();
    beta_.grad.row(0) += dy.colwise().sum();
    const Matrix<Scalar> g = dy * gamma_.value.row(0).asDiagonal();
    const RowVector<Scalar> sum_g = g.colwise().sum();
    const RowVector<Scalar> sum_gx = (g.array() * xhat_.array()).colwise().sum().matrix();
    Matrix<Scalar> dx = (g * n).rowwise() - sum_g;
    dx -= xhat_ * sum_gx.asDiagonal();
    return dx * (inv_std_ / n).asDiagonal();
  }

  FeatureMap<Scalar> forward(const FeatureMap<Scalar>& x) { return {x.height, x.width, forward(x.data)}; }
  FeatureMap<Scalar> backward(const FeatureMap<Scalar>& dy) { return {dy.height, dy.width, backward(dy.data)}; }

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + "gamma", gamma_);
    f(prefix + "beta", beta_);
  }

 private:
  Param<Scalar> gamma_;
  Param<Scalar> beta_;
  Matrix<Scalar> xhat_;
  RowVector<Scalar> inv_std_;
};

/// Exact GELU x * Phi(x).
template <typename Scalar>
Matrix<Scalar> gelu(const Matrix<Scalar>& x) {
  return x.unaryExpr([](Scalar v) { return Scalar(0.5) * v * (Scalar(1) + std::erf(v * Scalar(std::numbers::sqrt2 / 2))); });
}

template <typename Scalar>
Matrix<Scalar> gelu_backward(const Matrix<Scalar>& x, const Matrix<Scalar>& dy) {
  const auto inv_sqrt_2pi = Scalar(0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2);
  return x.binaryExpr(dy, [inv_sqrt_2pi](Scalar v, Scalar g) {
    const Scalar cdf = Scalar(0.5) * (Scalar(1) + std::erf(v * Scalar(std::numbers::sqrt2 / 2)));
    return g * (cdf + v * inv_sqrt_2pi * std::exp(Scalar(-0.5) * v * v));
  });
}

struct LrdcConfig {
  Index channels = 16;
  int dilation = 1;
  int kernel = 3;
};

/// X + GELU(PW(IN(SepPW(DW_d(X))))).
template <typename Scalar>
class Lrdc {
 public:
  Lrdc() = default;
  explicit Lrdc(const LrdcConfig& cfg)
      : cfg_(cfg),
        dw_(cfg.channels, cfg.dilation, cfg.kernel),
        sep_(cfg.channels, cfg.channels, false),
        norm_(cfg.channels),
        pw_(cfg.channels, cfg.channels, true) {
    if (cfg.channels < 1) throw RangeError("Lrdc: channels must be >= 1");
  }

  void init(Rng& rng) {
    dw_.init(rng);
    sep_.init(rng);
    pw_.init(rng);
  }

  [[nodiscard]] const LrdcConfig& config() const { return cfg_; }

  FeatureMap<Scalar> forward(const FeatureMap<Scalar>& x) {
    if (x.channels() != cfg_.channels)
      throw ShapeError("Lrdc: expected " + std::to_string(cfg_.channels) + " channels, got " + std::to_string(x.channels()));
    const FeatureMap<Scalar> a = dw_.forward(x);
    const Matrix<Scalar> b = sep_.forward(a.data);
    const Matrix<Scalar> c = norm_.forward(b);
    pre_ = pw_.forward(c);
    return {x.height, x.width, x.data + gelu(pre_)};
  }

  FeatureMap<Scalar> backward(const FeatureMap<Scalar>& dy) {
    const Matrix<Scalar> dpre = gelu_backward(pre_, dy.data);
    const Matrix<Scalar> dc = pw_.backward(dpre);
    const Matrix<Scalar> db = norm_.backward(dc);
    const FeatureMap<Scalar> da(dy.height, dy.width, sep_.backward(db));
    FeatureMap<Scalar> dx = dw_.backward(da);
    dx.data += dy.data;
    return dx;
  }

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    dw_.visit(prefix + "dw.", f);
    sep_.visit(prefix + "sep.", f);
    norm_.visit(prefix + "norm.", f);
    pw_.visit(prefix + "pw.", f);
  }

  /// 2C^2 + 12C for k = 3.
  static Index analytic_params(Index c, int k = 3) { return Index{k} * k * c + c * c + 2 * c + c * c + c; }
  /// P (2C^2 + k^2 C)
  static std::uint64_t analytic_macs(Index pixels, Index c, int k = 3) {
    return static_cast<std::uint64_t>(pixels * (2 * c * c + Index{k} * k * c));
  }

 private:
  LrdcConfig cfg_;
  DepthwiseDilatedConv<Scalar> dw_;
  PointwiseConv<Scalar> sep_;
  InstanceNorm<Scalar> norm_;
  PointwiseConv<Scalar> pw_;
  Matrix<Scalar> pre_;
};

// ---------------------------------------------------------------------------
// Reference convolutions for the cost formulas (stride + dilation, no bias).

/// Dense k x k convolution; weight(tap, ci * c_out + co). Samples the input
/// at stride s with reflect same-padding.
template <typename Scalar>
class StandardConv {
 public:
  explicit StandardConv(const ConvSpec& spec) : spec_(spec), weight_(Index{spec.kernel} * spec.kernel, Index{spec.in_channels} * spec.out_channels) {
    spec.validate();
  }

  void init(Rng& rng) { weight_.fill_uniform(rng, 1.0 / std::sqrt(double(spec_.kernel * spec_.kernel * spec_.in_channels))); }

  [[nodiscard]] FeatureMap<Scalar> apply(const FeatureMap<Scalar>& x) const {
    const ConvSpec& s = spec_;
    if (x.height != s.h_in || x.width != s.w_in || x.channels() != s.in_channels) throw ShapeError("StandardConv: input shape");
    FeatureMap<Scalar> y(s.h_out, s.w_out, s.out_channels);
    const int half = s.kernel / 2;
    for (Index co = 0; co < s.out_channels; ++co)
      for (Index ci = 0; ci < s.in_channels; ++ci)
        for (int b = 0; b < s.kernel; ++b)
          for (int a = 0; a < s.kernel; ++a) {
            const Scalar w = weight_.value(a + s.kernel * b, ci * s.out_channels + co);
            auto out = y.plane(co);
            const auto in = x.plane(ci);
            for (Index j = 0; j < s.w_out; ++j)
              for (Index i = 0; i < s.h_out; ++i)
                out(i, j) += w * in(reflect_index(i * s.stride + (a - half) * s.dilation, s.h_in),
                                    reflect_index(j * s.stride + (b - half) * s.dilation, s.w_in));
          }
    instrument::add_macs(static_cast<std::uint64_t>(flops_standard(s)));
    return y;
  }

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + "weight", weight_);
  }

  Param<Scalar>& weight() { return weight_; }

 private:
  ConvSpec spec_;
  Param<Scalar> weight_;
};

/// Depthwise dilated conv at input resolution followed by a strided 1x1.
template <typename Scalar>
class SeparableConv {
 public:
  explicit SeparableConv(const ConvSpec& spec)
      : spec_(spec), dw_(spec.in_channels, spec.dilation, spec.kernel), pw_(spec.in_channels, spec.out_channels, false) {
    spec.validate();
  }

  void init(Rng& rng) {
    dw_.init(rng);
    pw_.init(rng);
  }

  [[nodiscard]] FeatureMap<Scalar> apply(const FeatureMap<Scalar>& x) const {
    const ConvSpec& s = spec_;
    if (x.height != s.h_in || x.width != s.w_in || x.channels() != s.in_channels) throw ShapeError("SeparableConv: input shape");
    const FeatureMap<Scalar> full = dw_.apply(x);
    FeatureMap<Scalar> sampled(s.h_out, s.w_out, s.in_channels);
    for (Index c = 0; c < s.in_channels; ++c)
      for (Index j = 0; j < s.w_out; ++j)
        for (Index i = 0; i < s.h_out; ++i) sampled.plane(c)(i, j) = full.plane(c)(i * s.stride, j * s.stride);
    return {s.h_out, s.w_out, pw_.apply(sampled.data)};
  }

  /// Equivalent dense kernel: dw(tap, ci) * pw(ci, co).
  [[nodiscard]] Matrix<Scalar> dense_kernel() {
    const ConvSpec& s = spec_;
    Matrix<Scalar> k(Index{s.kernel} * s.kernel, Index{s.in_channels} * s.out_channels);
    for (Index ci = 0; ci < s.in_channels; ++ci)
      for (Index co = 0; co < s.out_channels; ++co)
        k.col(ci * s.out_channels + co) = dw_.weight().value.col(ci) * pw_.weight().value(ci, co);
    return k;
  }

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    dw_.visit(prefix + "dw.", f);
    pw_.visit(prefix + "pw.", f);
  }

 private:
  ConvSpec spec_;
  DepthwiseDilatedConv<Scalar> dw_;
  PointwiseConv<Scalar> pw_;
};

}  // namespace blocks
}  // namespace lpcgmn
