#pragma once

// Token attention (MHSA, token x token) and cross-covariance attention
// (MHCCA, feature x feature) over a FeatureMap read as a d_m x d_n token
// matrix, with backward passes and leading-order cost counts.

#include "lpcgmn/blocks.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace lpcgmn::attention {

using blocks::gelu;
using blocks::gelu_backward;
using blocks::PointwiseConv;

// ---------------------------------------------------------------------------
// Free functions

template <typename Scalar>
struct Qkv {
  Matrix<Scalar> q;
  Matrix<Scalar> k;
  Matrix<Scalar> v;
};

/// Q = Z Wq, K = Z Wk, V = Z Wv.
template <typename Scalar>
Qkv<Scalar> qkv_project(const Matrix<Scalar>& z, const Matrix<Scalar>& wq, const Matrix<Scalar>& wk, const Matrix<Scalar>& wv) {
  if (wq.rows() != z.cols() || wk.rows() != z.cols() || wv.rows() != z.cols())
    throw ShapeError("qkv_project: projection rows must equal token width " + std::to_string(z.cols()));
  if (wq.cols() != wk.cols()) throw ShapeError("qkv_project: d_q must equal d_k");
  instrument::add_macs(static_cast<std::uint64_t>(z.rows() * z.cols() * (wq.cols() + wk.cols() + wv.cols())));
  return {z * wq, z * wk, z * wv};
}

template <typename Scalar>
Matrix<Scalar> softmax_rows(const Matrix<Scalar>& s) {
  Matrix<Scalar> a = s.colwise() - s.rowwise().maxCoeff();
  a = a.array().exp().matrix();
  const Vector<Scalar> inv = a.rowwise().sum().cwiseInverse();
  return inv.asDiagonal() * a;
}

template <typename Scalar>
Matrix<Scalar> softmax_cols(const Matrix<Scalar>& s) {
  Matrix<Scalar> a = s.rowwise() - s.colwise().maxCoeff();
  a = a.array().exp().matrix();
  const RowVector<Scalar> inv = a.colwise().sum().cwiseInverse();
  return a * inv.asDiagonal();
}

/// Row-wise softmax(Q K^T / sqrt(eta)), d_m x d_m.
template <typename Scalar>
Matrix<Scalar> self_attention_matrix(const Matrix<Scalar>& q, const Matrix<Scalar>& k, double eta) {
  if (q.cols() != k.cols()) throw ShapeError("self_attention_matrix: d_q must equal d_k");
  if (!(eta > 0.0)) throw RangeError("self_attention_matrix: eta must be positive");
  instrument::add_macs(static_cast<std::uint64_t>(q.rows() * k.rows() * q.cols()));
  return softmax_rows<Scalar>((q * k.transpose()) * static_cast<Scalar>(1.0 / std::sqrt(eta)));
}

/// O = AM V.
template <typename Scalar>
Matrix<Scalar> attention_apply(const Matrix<Scalar>& am, const Matrix<Scalar>& v) {
  if (am.cols() != v.rows()) throw ShapeError("attention_apply: AM columns must equal value rows");
  instrument::add_macs(static_cast<std::uint64_t>(am.rows() * am.cols() * v.cols()));
  return am * v;
}

/// Columns scaled to unit L2 norm (norms below eps are replaced by eps).
template <typename Scalar>
Matrix<Scalar> l2_normalize_cols(const Matrix<Scalar>& x, RowVector<Scalar>* norms = nullptr, Scalar eps = Scalar(1e-12)) {
  RowVector<Scalar> n = x.colwise().norm().cwiseMax(eps);
  if (norms) *norms = n;
  return x * n.cwiseInverse().asDiagonal();
}

/// Feature x feature map softmax over the K index of K^T Q / temperature,
/// using L2-normalized columns; every column sums to one.
template <typename Scalar>
Matrix<Scalar> cross_covariance_matrix(const Matrix<Scalar>& q, const Matrix<Scalar>& k, Scalar temperature) {
  if (q.rows() != k.rows() || q.cols() != k.cols()) throw ShapeError("cross_covariance_matrix: Q and K shapes differ");
  instrument::add_macs(static_cast<std::uint64_t>(q.rows() * q.cols() * k.cols()));
  return softmax_cols<Scalar>((l2_normalize_cols<Scalar>(k).transpose() * l2_normalize_cols<Scalar>(q)) / temperature);
}

/// r (*) psi, elementwise.
template <typename Scalar>
Matrix<Scalar> refine_band(const Matrix<Scalar>& r, const Matrix<Scalar>& psi) {
  if (r.rows() != psi.rows() || r.cols() != psi.cols())
    throw ShapeError("refine_band: residual " + std::to_string(r.rows()) + "x" + std::to_string(r.cols()) +
                     " vs map " + std::to_string(psi.rows()) + "x" + std::to_string(psi.cols()));
  return r.cwiseProduct(psi);
}

struct AttentionCost {
  double mhsa_time = 0;
  double mhsa_mem = 0;
  double mhcca_time = 0;
  double mhcca_mem = 0;
};

/// O(d_m^2 d_n), O(I d_m^2 + d_m d_n) vs O(d_m d_n^2 / I), O(d_n^2 / I + d_m d_n).
inline AttentionCost attention_cost(double d_m, double d_n, double heads) {
  if (!(d_m > 0 && d_n > 0 && heads > 0)) throw RangeError("attention_cost: sizes must be positive");
  return {d_m * d_m * d_n, heads * d_m * d_m + d_m * d_n, d_m * d_n * d_n / heads, d_n * d_n / heads + d_m * d_n};
}

// ---------------------------------------------------------------------------
// LayerNorm over the channels of each token.

template <typename Scalar>
class LayerNorm {
 public:
  static constexpr double kEps = 1e-5;

  LayerNorm() = default;
  explicit LayerNorm(Index channels) : gamma_(1, channels), beta_(1, channels) { gamma_.value.setOnes(); }

  Matrix<Scalar> forward(const Matrix<Scalar>& x) {
    const auto n = static_cast<Scalar>(x.cols());
    const Vector<Scalar> mean = x.rowwise().sum() / n;
    xhat_ = x.colwise() - mean;
    inv_std_ = ((xhat_.array().square().rowwise().sum() / n) + Scalar(kEps)).rsqrt().matrix();
    xhat_ = inv_std_.asDiagonal() * xhat_;
    Matrix<Scalar> y = xhat_ * gamma_.value.row(0).asDiagonal();
    y.rowwise() += beta_.value.row(0);
    return y;
  }

  Matrix<Scalar> backward(const Matrix<Scalar>& dy) {
    const auto n = static_cast<Scalar>(dy.cols());
    gamma_.grad.row(0) += (dy.array() * xhat_.array()).colwise().sum().matrix();
    beta_.grad.row(0) += dy.colwise().sum();
    const Matrix<Scalar> g = dy * gamma_.value.row(0).asDiagonal();
    const Vector<Scalar> sum_g = g.rowwise().sum();
    const Vector<Scalar> sum_gx = (g.array() * xhat_.array()).rowwise().sum().matrix();
    Matrix<Scalar> dx = (g * n).colwise() - sum_g;
    dx -= sum_gx.asDiagonal() * xhat_;
    return (inv_std_ / n).asDiagonal() * dx;
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
  Vector<Scalar> inv_std_;
};

// ---------------------------------------------------------------------------
// Fused attention blocks. Both map a (H, W, C) feature map G to a
// (H, W, out) map psi:
//   F   = W_t [head_1 ... head_I]
//   Hf  = GELU(PW(F)) + G
//   psi = Reduce(Hf)

struct AttentionConfig {
  Index channels = 16;  // d_n
  int heads = 1;        // I
  Index out_channels = 1;
};

/// Largest number of attention-matrix entries (tokens^2 * heads) MHSA accepts.
inline constexpr double kMhsaEntryBudget = 1u << 28;

template <typename Scalar>
class Mhsa {
 public:
  Mhsa() = default;
  explicit Mhsa(const AttentionConfig& cfg)
      : cfg_(cfg),
        norm_(cfg.channels),
        wt_(Index{cfg.heads} * cfg.channels, cfg.channels),
        pw_(cfg.channels, cfg.channels, true),
        reduce_(cfg.channels, cfg.out_channels, true) {
    if (cfg.heads < 1) throw RangeError("Mhsa: heads must be >= 1");
    if (cfg.channels < 1 || cfg.out_channels < 1) throw RangeError("Mhsa: channel counts must be >= 1");
    for (int h = 0; h < cfg.heads; ++h) {
      wq_.emplace_back(cfg.channels, cfg.channels);
      wk_.emplace_back(cfg.channels, cfg.channels);
      wv_.emplace_back(cfg.channels, cfg.channels);
    }
  }

  void init(Rng& rng) {
    const double b = 1.0 / std::sqrt(double(cfg_.channels));
    for (int h = 0; h < cfg_.heads; ++h) {
      wq_[h].fill_uniform(rng, b);
      wk_[h].fill_uniform(rng, b);
      wv_[h].fill_uniform(rng, b);
    }
    wt_.fill_uniform(rng, 1.0 / std::sqrt(double(wt_.value.rows())));
    pw_.init(rng);
    reduce_.init(rng);
  }

  [[nodiscard]] const AttentionConfig& config() const { return cfg_; }
  /// Scaling eta = d_k.
  [[nodiscard]] double eta() const { return double(cfg_.channels); }

  FeatureMap<Scalar> forward(const FeatureMap<Scalar>& x) {
    if (x.channels() != cfg_.channels) throw ShapeError("Mhsa: channel mismatch");
    const Index p = x.pixels();
    if (double(p) * double(p) * cfg_.heads > kMhsaEntryBudget)
      throw RangeError("Mhsa: " + std::to_string(p) + " tokens exceed the attention memory budget");
    x_ = x.data;
    z_ = norm_.forward(x.data);
    const Index c = cfg_.channels;
    heads_.resize(static_cast<std::size_t>(cfg_.heads));
    cat_.resize(p, c * cfg_.heads);
    for (int h = 0; h < cfg_.heads; ++h) {
      auto& hd = heads_[static_cast<std::size_t>(h)];
      auto qkv = qkv_project<Scalar>(z_, wq_[h].value, wk_[h].value, wv_[h].value);
      hd.q = std::move(qkv.q);
      hd.k = std::move(qkv.k);
      hd.v = std::move(qkv.v);
      hd.a = self_attention_matrix<Scalar>(hd.q, hd.k, eta());
      cat_.middleCols(h * c, c) = attention_apply<Scalar>(hd.a, hd.v);
    }
    instrument::add_macs(static_cast<std::uint64_t>(p * wt_.value.rows() * c));
    const Matrix<Scalar> f = cat_ * wt_.value;
    pre_ = pw_.forward(f);
    const Matrix<Scalar> fused = gelu(pre_) + x.data;
    return {x.height, x.width, reduce_.forward(fused)};
  }

  FeatureMap<Scalar> backward(const FeatureMap<Scalar>& dpsi) {
    const Index c = cfg_.channels;
    const Matrix<Scalar> dfused = reduce_.backward(dpsi.data);
    Matrix<Scalar> dx = dfused;
    const Matrix<Scalar> df = pw_.backward(gelu_backward(pre_, dfused));
    wt_.grad.noalias() += cat_.transpose() * df;
    const Matrix<Scalar> dcat = df * wt_.value.transpose();
    const auto scale = static_cast<Scalar>(1.0 / std::sqrt(eta()));
    Matrix<Scalar> dz = Matrix<Scalar>::Zero(z_.rows(), z_.cols());
    for (int h = 0; h < cfg_.heads; ++h) {
      const auto& hd = heads_[static_cast<std::size_t>(h)];
      const Matrix<Scalar> dout = dcat.middleCols(h * c, c);
      const Matrix<Scalar> da = dout * hd.v.transpose();
      const Matrix<Scalar> dv = hd.a.transpose() * dout;
      const Vector<Scalar> row_dot = (da.array() * hd.a.array()).rowwise().sum().matrix();
      const Matrix<Scalar> ds = hd.a.cwiseProduct(da.colwise() - row_dot) * scale;
      const Matrix<Scalar> dq = ds * hd.k;
      const Matrix<Scalar> dk = ds.transpose() * hd.q;
      wq_[h].grad.noalias() += z_.transpose() * dq;
      wk_[h].grad.noalias() += z_.transpose() * dk;
      wv_[h].grad.noalias() += z_.transpose() * dv;
      dz.noalias() += dq * wq_[h].value.transpose() + dk * wk_[h].value.transpose() + dv * wv_[h].value.transpose();
    }
    dx += norm_.backward(dz);
    return {dpsi.height, dpsi.width, dx};
  }

  /// Attention matrix of head h from the last forward.
  [[nodiscard]] const Matrix<Scalar>& attention(int h) const { return heads_.at(static_cast<std::size_t>(h)).a; }

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    norm_.visit(prefix + "norm.", f);
    for (int h = 0; h < cfg_.heads; ++h) {
      const std::string p = prefix + "head" + std::to_string(h) + ".";
      f(p + "wq", wq_[h]);
      f(p + "wk", wk_[h]);
      f(p + "wv", wv_[h]);
    }
    f(prefix + "wt", wt_);
    pw_.visit(prefix + "pw.", f);
    reduce_.visit(prefix + "reduce.", f);
  }

  static Index analytic_params(const AttentionConfig& c) {
    const Index n = c.channels;
    const Index i = c.heads;
    return 2 * n + 3 * i * n * n + i * n * n + n * n + n + n * c.out_channels + c.out_channels;
  }

  static std::uint64_t analytic_macs(Index pixels, const AttentionConfig& c) {
    const Index n = c.channels;
    const Index i = c.heads;
    const Index p = pixels;
    return static_cast<std::uint64_t>(i * (3 * p * n * n + 2 * p * p * n) + p * i * n * n + p * n * n +
                                      p * n * c.out_channels);
  }

 private:
  struct Head {
    Matrix<Scalar> q, k, v, a;
  };

  AttentionConfig cfg_;
  LayerNorm<Scalar> norm_;
  std::vector<Param<Scalar>> wq_, wk_, wv_;
  Param<Scalar> wt_;
  PointwiseConv<Scalar> pw_;
  PointwiseConv<Scalar> reduce_;

  Matrix<Scalar> x_, z_, cat_, pre_;
  std::vector<Head> heads_;
};

template <typename Scalar>
class Mhcca {
 public:
  static constexpr double kNormEps = 1e-12;

  Mhcca() = default;
  explicit Mhcca(const AttentionConfig& cfg)
      : cfg_(cfg),
        norm_(cfg.channels),
        wq_(cfg.channels, cfg.channels),
        wk_(cfg.channels, cfg.channels),
        wv_(cfg.channels, cfg.channels),
        temperature_(1, cfg.heads),
        wt_(cfg.channels, cfg.channels),
        pw_(cfg.channels, cfg.channels, true),
        reduce_(cfg.channels, cfg.out_channels, true) {
    if (cfg.heads < 1) throw RangeError("Mhcca: heads must be >= 1");
    if (cfg.channels < 1 || cfg.channels % cfg.heads != 0)
      throw RangeError("Mhcca: channels (" + std::to_string(cfg.channels) + ") must be divisible by heads (" +
                       std::to_string(cfg.heads) + ")");
    temperature_.value.setOnes();
  }

  void init(Rng& rng) {
    const double b = 1.0 / std::sqrt(double(cfg_.channels));
    wq_.fill_uniform(rng, b);
    wk_.fill_uniform(rng, b);
    wv_.fill_uniform(rng, b);
    wt_.fill_uniform(rng, b);
    pw_.init(rng);
    reduce_.init(rng);
  }

  [[nodiscard]] const AttentionConfig& config() const { return cfg_; }
  [[nodiscard]] Index head_width() const { return cfg_.channels / cfg_.heads; }

  FeatureMap<Scalar> forward(const FeatureMap<Scalar>& x) {
    if (x.channels() != cfg_.channels) throw ShapeError("Mhcca: channel mismatch");
    const Index p = x.pixels();
    const Index c = head_width();
    z_ = norm_.forward(x.data);
    auto qkv = qkv_project<Scalar>(z_, wq_.value, wk_.value, wv_.value);
    q_ = std::move(qkv.q);
    k_ = std::move(qkv.k);
    v_ = std::move(qkv.v);
    heads_.resize(static_cast<std::size_t>(cfg_.heads));
    cat_.resize(p, cfg_.channels);
    for (int h = 0; h < cfg_.heads; ++h) {
      auto& hd = heads_[static_cast<std::size_t>(h)];
      hd.qn = l2_normalize_cols<Scalar>(q_.middleCols(h * c, c), &hd.q_norm, Scalar(kNormEps));
      hd.kn = l2_normalize_cols<Scalar>(k_.middleCols(h * c, c), &hd.k_norm, Scalar(kNormEps));
      instrument::add_macs(static_cast<std::uint64_t>(p * c * c));
      hd.s = (hd.kn.transpose() * hd.qn) / temperature_.value(0, h);
      hd.a = softmax_cols<Scalar>(hd.s);
      cat_.middleCols(h * c, c) = attention_apply<Scalar>(v_.middleCols(h * c, c), hd.a);
    }
    instrument::add_macs(static_cast<std::uint64_t>(p * cfg_.channels * cfg_.channels));
    const Matrix<Scalar> f = cat_ * wt_.value;
    pre_ = pw_.forward(f);
    const Matrix<Scalar> fused = gelu(pre_) + x.data;
    return {x.height, x.width, reduce_.forward(fused)};
  }

  FeatureMap<Scalar> backward(const FeatureMap<Scalar>& dpsi) {
    const Index c = head_width();
    const Matrix<Scalar> dfused = reduce_.backward(dpsi.data);
    Matrix<Scalar> dx = dfused;
    const Matrix<Scalar> df = pw_.backward(gelu_backward(pre_, dfused));
    wt_.grad.noalias() += cat_.transpose() * df;
    const Matrix<Scalar> dcat = df * wt_.value.transpose();
    Matrix<Scalar> dq(q_.rows(), q_.cols()), dk(k_.rows(), k_.cols()), dv(v_.rows(), v_.cols());
    for (int h = 0; h < cfg_.heads; ++h) {
      const auto& hd = heads_[static_cast<std::size_t>(h)];
      const Scalar tau = temperature_.value(0, h);
      const Matrix<Scalar> dout = dcat.middleCols(h * c, c);
      dv.middleCols(h * c, c) = dout * hd.a.transpose();
      const Matrix<Scalar> da = v_.middleCols(h * c, c).transpose() * dout;
      const RowVector<Scalar> col_dot = (da.array() * hd.a.array()).colwise().sum().matrix();
      const Matrix<Scalar> ds = hd.a.cwiseProduct(da.rowwise() - col_dot);
      temperature_.grad(0, h) -= (ds.array() * hd.s.array()).sum() / tau;
      const Matrix<Scalar> dm = ds / tau;
      dq.middleCols(h * c, c) = normalize_backward(hd.qn, hd.q_norm, hd.kn * dm);
      dk.middleCols(h * c, c) = normalize_backward(hd.kn, hd.k_norm, hd.qn * dm.transpose());
    }
    wq_.grad.noalias() += z_.transpose() * dq;
    wk_.grad.noalias() += z_.transpose() * dk;
    wv_.grad.noalias() += z_.transpose() * dv;
    const Matrix<Scalar> dz = dq * wq_.value.transpose() + dk * wk_.value.transpose() + dv * wv_.value.transpose();
    dx += norm_.backward(dz);
    return {dpsi.height, dpsi.width, dx};
  }

  /// (C/I) x (C/I) attention matrix of head h from the last forward.
  [[nodiscard]] const Matrix<Scalar>& attention(int h) const { return heads_.at(static_cast<std::size_t>(h)).a; }

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    norm_.visit(prefix + "norm.", f);
    f(prefix + "wq", wq_);
    f(prefix + "wk", wk_);
    f(prefix + "wv", wv_);
    f(prefix + "temperature", temperature_);
    f(prefix + "wt", wt_);
    pw_.visit(prefix + "pw.", f);
    reduce_.visit(prefix + "reduce.", f);
  }

  static Index analytic_params(const AttentionConfig& c) {
    const Index n = c.channels;
    return 2 * n + 3 * n * n + c.heads + n * n + n * n + n + n * c.out_channels + c.out_channels;
  }

  static std::uint64_t analytic_macs(Index pixels, const AttentionConfig& c) {
    const Index n = c.channels;
    const Index p = pixels;
    return static_cast<std::uint64_t>(3 * p * n * n + 2 * p * n * n / c.heads + p * n * n + p * n * n +
                                      p * n * c.out_channels);
  }

 private:
  struct Head {
    Matrix<Scalar> qn, kn, s, a;
    RowVector<Scalar> q_norm, k_norm;
  };

  // x_hat = x / max(|x|, eps) per column.
  static Matrix<Scalar> normalize_backward(const Matrix<Scalar>& xn, const RowVector<Scalar>& norms, const Matrix<Scalar>& g) {
    Matrix<Scalar> out(g.rows(), g.cols());
    for (Index j = 0; j < g.cols(); ++j) {
      if (norms(j) > Scalar(kNormEps))
        out.col(j) = (g.col(j) - xn.col(j) * xn.col(j).dot(g.col(j))) / norms(j);
      else
        out.col(j) = g.col(j) / norms(j);
    }
    return out;
  }

  AttentionConfig cfg_;
  LayerNorm<Scalar> norm_;
  Param<Scalar> wq_, wk_, wv_, temperature_, wt_;
  PointwiseConv<Scalar> pw_;
  PointwiseConv<Scalar> reduce_;

  Matrix<Scalar> z_, q_, k_, v_, cat_, pre_;
  std::vector<Head> heads_;
};

}  // namespace lpcgmn::attention
