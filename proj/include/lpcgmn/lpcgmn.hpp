#pragma once

// The dual-branch network: the pyramid base I_L is mapped to a low-frequency
// estimate by LRDC blocks and MHSA; each residual level, coarse to fine, is
// re-weighted by a one-channel map from an LRDC + MHCCA branch, and the
// inverse pyramid assembles the output.
//
//   level L-1 input: [up(I_L), up(est_L), r_{L-1}]
//   level l   input: [up(psi_{l+1}), r_l, up(est_{l+1})]   (last one if reinject)
//   est_l = guide_l * psi_l + pyr_up(est_{l+1})
//
// guide_l is the channel mean of the input residual r_l.

#include "lpcgmn/attention.hpp"
#include "lpcgmn/gridmap.hpp"
#include "lpcgmn/pyramid.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace lpcgmn {

struct ModelConfig {
  int levels = 3;
  int heads = 2;
  std::vector<int> dilations{1, 2, 3};
  std::array<int, 4> lrdc_counts{4, 3, 3, 2};  // low branch, level L-1, intermediate, level 0
  Index width = 64;
  Index fine_width = 0;  // width below level L-1; 0 means width / 2
  Index in_channels = 2;
  Index out_channels = 1;
  bool reinject = true;

  [[nodiscard]] Index resolved_fine_width() const { return fine_width > 0 ? fine_width : std::max<Index>(width / 2, 1); }

  [[nodiscard]] Index width_at(int level) const { return level == levels - 1 ? width : resolved_fine_width(); }

  [[nodiscard]] int blocks_at(int level) const {
    if (level == levels - 1) return lrdc_counts[1];
    if (level == 0) return lrdc_counts[3];
    return lrdc_counts[2];
  }

  [[nodiscard]] Index inputs_at(int level) const {
    if (level == levels - 1) return 2 * in_channels + 1;
    return in_channels + 1 + (reinject ? 1 : 0);
  }

  void validate() const {
    if (levels < 1 || levels > 8) throw ConfigError("model.levels must be in [1, 8], got " + std::to_string(levels));
    if (heads < 1) throw ConfigError("model.heads must be >= 1");
    if (dilations.empty()) throw ConfigError("model.dilations must not be empty");
    for (int d : dilations)
      if (d < 1) throw ConfigError("model.dilations entries must be >= 1");
    for (int n : lrdc_counts)
      if (n < 0) throw ConfigError("model.lrdc_counts entries must be >= 0");
    if (width < 1) throw ConfigError("model.width must be >= 1");
    if (width % heads != 0) throw ConfigError("model.width must be divisible by model.heads");
    if (resolved_fine_width() % heads != 0) throw ConfigError("model.fine_width must be divisible by model.heads");
    if (in_channels < 1) throw ConfigError("model.in_channels must be >= 1");
    if (out_channels != 1) throw ConfigError("model.out_channels must be 1");
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct ModelCosts {
  std::uint64_t params = 0;
  std::uint64_t macs = 0;  // multiply-accumulates of one forward pass
};

/// Analytic parameter count and per-forward MACs for an h x w input.
ModelCosts count_costs(const ModelConfig& cfg, Index height, Index width);

// ---------------------------------------------------------------------------
// Bilinear x2 upsampling (half-pixel centres, edge clamped) and its adjoint.

namespace detail {

template <typename Scalar>
Matrix<Scalar> bilinear_up_rows(const Matrix<Scalar>& x) {
  const Index n = x.rows();
  Matrix<Scalar> y(2 * n, x.cols());
  const Scalar a(0.75), b(0.25);
  for (Index k = 0; k < n; ++k) {
    y.row(2 * k) = a * x.row(k) + b * x.row(std::max<Index>(k - 1, 0));
    y.row(2 * k + 1) = a * x.row(k) + b * x.row(std::min<Index>(k + 1, n - 1));
  }
  return y;
}

template <typename Scalar>
Matrix<Scalar> bilinear_up_rows_adjoint(const Matrix<Scalar>& g) {
  const Index n = g.rows() / 2;
  Matrix<Scalar> x = Matrix<Scalar>::Zero(n, g.cols());
  const Scalar a(0.75), b(0.25);
  for (Index k = 0; k < n; ++k) {
    x.row(k) += a * (g.row(2 * k) + g.row(2 * k + 1));
    x.row(std::max<Index>(k - 1, 0)) += b * g.row(2 * k);
    x.row(std::min<Index>(k + 1, n - 1)) += b * g.row(2 * k + 1);
  }
  return x;
}

}  // namespace detail

template <typename Scalar>
Matrix<Scalar> bilinear_up(const Matrix<Scalar>& x) {
  return detail::bilinear_up_rows<Scalar>(detail::bilinear_up_rows<Scalar>(x).transpose()).transpose();
}

template <typename Scalar>
Matrix<Scalar> bilinear_up_adjoint(const Matrix<Scalar>& g) {
  return detail::bilinear_up_rows_adjoint<Scalar>(detail::bilinear_up_rows_adjoint<Scalar>(g.transpose()).transpose());
}

// ---------------------------------------------------------------------------

/// Two-channel input (environment mask, transmitter map); one channel keeps
/// only the environment.
template <typename Scalar>
FeatureMap<Scalar> make_input(const CityMap& city, Index in_channels) {
  std::vector<Matrix<Scalar>> planes{city.environment_mask.cast<Scalar>()};
  if (in_channels >= 2) planes.push_back(city.transmitter_map.cast<Scalar>());
  if (in_channels > 2) throw ConfigError("make_input: city maps provide at most 2 channels");
  return FeatureMap<Scalar>::from_planes(planes);
}

template <typename Scalar>
class Network {
 public:
  Network() = default;

  Network(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg), seed_(seed) {
    cfg.validate();
    using blocks::Lrdc;
    using blocks::LrdcConfig;
    const auto dil = [&](int i) { return cfg.dilations[static_cast<std::size_t>(i) % cfg.dilations.size()]; };
    low_expand_ = blocks::PointwiseConv<Scalar>(cfg.in_channels, cfg.width, true);
    for (int i = 0; i < cfg.lrdc_counts[0]; ++i) low_blocks_.emplace_back(LrdcConfig{cfg.width, dil(i), 3});
    low_attn_ = attention::Mhsa<Scalar>({cfg.width, cfg.heads, cfg.out_channels});
    levels_.resize(static_cast<std::size_t>(cfg.levels));
    for (int l = cfg.levels - 1; l >= 0; --l) {
      auto& lv = levels_[static_cast<std::size_t>(l)];
      const Index c = cfg.width_at(l);
      lv.proj = blocks::PointwiseConv<Scalar>(cfg.inputs_at(l), c, true);
      for (int i = 0; i < cfg.blocks_at(l); ++i) lv.blocks.emplace_back(LrdcConfig{c, dil(i), 3});
      lv.attn = attention::Mhcca<Scalar>({c, cfg.heads, cfg.out_channels});
    }
    Rng rng(seed);
    low_expand_.init(rng);
    for (auto& b : low_blocks_) b.init(rng);
    low_attn_.init(rng);
    for (int l = cfg.levels - 1; l >= 0; --l) {
      auto& lv = levels_[static_cast<std::size_t>(l)];
      lv.proj.init(rng);
      for (auto& b : lv.blocks) b.init(rng);
      lv.attn.init(rng);
    }
  }

  [[nodiscard]] const ModelConfig& config() const { return cfg_; }
  [[nodiscard]] std::uint64_t seed() const { return seed_; }

  /// Harness mode: the low branch passes the channel mean of I_L through and
  /// every refinement map is 1, so the output is the pyramid reconstruction
  /// of the channel-mean input.
  void set_passthrough(bool on) { passthrough_ = on; }
  [[nodiscard]] bool passthrough() const { return passthrough_; }

  /// Unclamped output (h x w). Caches activations for backward().
  Matrix<Scalar> forward(const FeatureMap<Scalar>& input) {
    if (input.channels() != cfg_.in_channels)
      throw ShapeError("Network: expected " + std::to_string(cfg_.in_channels) + " input channels, got " +
                       std::to_string(input.channels()));
    const int L = cfg_.levels;
    pyramid::check_divisible(input.height, input.width, L);

    std::vector<pyramid::PyramidDecomposition<Scalar>> dec;
    for (Index c = 0; c < input.channels(); ++c) dec.push_back(pyramid::decompose<Scalar>(Matrix<Scalar>(input.plane(c)), L));
    std::vector<Matrix<Scalar>> planes;
    for (Index c = 0; c < input.channels(); ++c) planes.push_back(dec[static_cast<std::size_t>(c)].base);
    const FeatureMap<Scalar> base = FeatureMap<Scalar>::from_planes(planes);
    residuals_.assign(static_cast<std::size_t>(L), {});
    guides_.assign(static_cast<std::size_t>(L), {});
    for (int l = 0; l < L; ++l) {
      planes.clear();
      for (Index c = 0; c < input.channels(); ++c)
        planes.push_back(dec[static_cast<std::size_t>(c)].residuals[static_cast<std::size_t>(l)]);
      auto& r = residuals_[static_cast<std::size_t>(l)];
      r = FeatureMap<Scalar>::from_planes(planes);
      guides_[static_cast<std::size_t>(l)] = shape(r.data.rowwise().mean(), r.height, r.width);
    }

    // Low-frequency branch.
    if (passthrough_) {
      ihat_ = shape(base.data.rowwise().mean(), base.height, base.width);
    } else {
      FeatureMap<Scalar> t = low_expand_.forward(base);
      for (auto& b : low_blocks_) t = b.forward(t);
      ihat_ = shape(low_attn_.forward(t).data, base.height, base.width);
    }

    // Refinement, coarse to fine.
    psi_.assign(static_cast<std::size_t>(L), {});
    est_.assign(static_cast<std::size_t>(L), {});
    for (int l = L - 1; l >= 0; --l) {
      const auto li = static_cast<std::size_t>(l);
      const FeatureMap<Scalar>& r = residuals_[li];
      const Matrix<Scalar>& coarse_est = l == L - 1 ? ihat_ : est_[li + 1];
      if (passthrough_) {
        psi_[li] = Matrix<Scalar>::Ones(r.height, r.width);
      } else {
        std::vector<Matrix<Scalar>> in;
        if (l == L - 1) {
          for (Index c = 0; c < base.channels(); ++c) in.push_back(bilinear_up<Scalar>(Matrix<Scalar>(base.plane(c))));
          in.push_back(bilinear_up<Scalar>(ihat_));
          for (Index c = 0; c < r.channels(); ++c) in.push_back(r.plane(c));
        } else {
          in.push_back(bilinear_up<Scalar>(psi_[li + 1]));
          for (Index c = 0; c < r.channels(); ++c) in.push_back(r.plane(c));
          if (cfg_.reinject) in.push_back(bilinear_up<Scalar>(coarse_est));
        }
        auto& lv = levels_[li];
        FeatureMap<Scalar> t = lv.proj.forward(FeatureMap<Scalar>::from_planes(in));
        for (auto& b : lv.blocks) t = b.forward(t);
        psi_[li] = shape(lv.attn.forward(t).data, r.height, r.width);
      }
      est_[li] = attention::refine_band<Scalar>(guides_[li], psi_[li]) + pyramid::upsample<Scalar>(coarse_est);
    }
    return est_[0];
  }

  /// Clamped prediction in [0, 1].
  Matrix<Scalar> predict(const FeatureMap<Scalar>& input) {
    return forward(input).cwiseMax(Scalar(0)).cwiseMin(Scalar(1));
  }

  /// Accumulates parameter gradients for dLoss/dOutput of the last forward().
  void backward(const Matrix<Scalar>& dout) {
    const int L = cfg_.levels;
    std::vector<Matrix<Scalar>> dest(static_cast<std::size_t>(L));
    std::vector<Matrix<Scalar>> dpsi(static_cast<std::size_t>(L));
    for (int l = 0; l < L; ++l) {
      dest[static_cast<std::size_t>(l)] = Matrix<Scalar>::Zero(est_[static_cast<std::size_t>(l)].rows(), est_[static_cast<std::size_t>(l)].cols());
      dpsi[static_cast<std::size_t>(l)] = dest[static_cast<std::size_t>(l)];
    }
    dest[0] = dout;
    Matrix<Scalar> dihat = Matrix<Scalar>::Zero(ihat_.rows(), ihat_.cols());
    for (int l = 0; l < L; ++l) {
      const auto li = static_cast<std::size_t>(l);
      dpsi[li] += guides_[li].cwiseProduct(dest[li]);
      const Matrix<Scalar> dcoarse = pyramid::upsample_adjoint<Scalar>(dest[li]);
      if (l == L - 1)
        dihat += dcoarse;
      else
        dest[li + 1] += dcoarse;
      if (passthrough_) continue;
      auto& lv = levels_[li];
      const FeatureMap<Scalar>& r = residuals_[li];
      FeatureMap<Scalar> dt = lv.attn.backward(FeatureMap<Scalar>(r.height, r.width, flat(dpsi[li])));
      for (auto it = lv.blocks.rbegin(); it != lv.blocks.rend(); ++it) dt = it->backward(dt);
      const FeatureMap<Scalar> din = lv.proj.backward(dt);
      if (l == L - 1) {
        dihat += bilinear_up_adjoint<Scalar>(Matrix<Scalar>(din.plane(cfg_.in_channels)));
      } else {
        dpsi[li + 1] += bilinear_up_adjoint<Scalar>(Matrix<Scalar>(din.plane(0)));
        if (cfg_.reinject) dest[li + 1] += bilinear_up_adjoint<Scalar>(Matrix<Scalar>(din.plane(din.channels() - 1)));
      }
    }
    if (passthrough_) return;
    FeatureMap<Scalar> dt = low_attn_.backward(FeatureMap<Scalar>(ihat_.rows(), ihat_.cols(), flat(dihat)));
    for (auto it = low_blocks_.rbegin(); it != low_blocks_.rend(); ++it) dt = it->backward(dt);
    low_expand_.backward(dt);
  }

  /// Intermediate results of the last forward().
  [[nodiscard]] const Matrix<Scalar>& low_estimate() const { return ihat_; }
  [[nodiscard]] const Matrix<Scalar>& refinement_map(int level) const { return psi_.at(static_cast<std::size_t>(level)); }
  [[nodiscard]] const attention::Mhsa<Scalar>& low_attention() const { return low_attn_; }
  [[nodiscard]] const attention::Mhcca<Scalar>& level_attention(int level) const {
    return levels_.at(static_cast<std::size_t>(level)).attn;
  }

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    low_expand_.visit(prefix + "low.expand.", f);
    for (std::size_t i = 0; i < low_blocks_.size(); ++i) low_blocks_[i].visit(prefix + "low.lrdc" + std::to_string(i) + ".", f);
    low_attn_.visit(prefix + "low.mhsa.", f);
    for (int l = cfg_.levels - 1; l >= 0; --l) {
      auto& lv = levels_[static_cast<std::size_t>(l)];
      const std::string p = prefix + "level" + std::to_string(l) + ".";
      lv.proj.visit(p + "proj.", f);
      for (std::size_t i = 0; i < lv.blocks.size(); ++i) lv.blocks[i].visit(p + "lrdc" + std::to_string(i) + ".", f);
      lv.attn.visit(p + "mhcca.", f);
    }
  }

  template <typename F>
  void visit(F&& f) {
    visit("", std::forward<F>(f));
  }

 private:
  struct Level {
    blocks::PointwiseConv<Scalar> proj;
    std::vector<blocks::Lrdc<Scalar>> blocks;
    attention::Mhcca<Scalar> attn;
  };

  template <typename Derived>
  static Matrix<Scalar> shape(const Eigen::MatrixBase<Derived>& column, Index h, Index w) {
    const Matrix<Scalar> c = column;
    return Eigen::Map<const Matrix<Scalar>>(c.data(), h, w);
  }

  static Matrix<Scalar> flat(const Matrix<Scalar>& plane) {
    return Eigen::Map<const Matrix<Scalar>>(plane.data(), plane.size(), 1);
  }

  ModelConfig cfg_;
  std::uint64_t seed_ = 0;
  bool passthrough_ = false;

  blocks::PointwiseConv<Scalar> low_expand_;
  std::vector<blocks::Lrdc<Scalar>> low_blocks_;
  attention::Mhsa<Scalar> low_attn_;
  std::vector<Level> levels_;

  std::vector<FeatureMap<Scalar>> residuals_;
  std::vector<Matrix<Scalar>> guides_;
  Matrix<Scalar> ihat_;
  std::vector<Matrix<Scalar>> psi_;
  std::vector<Matrix<Scalar>> est_;
};

inline ModelCosts count_costs(const ModelConfig& cfg, Index height, Index width) {
  cfg.validate();
  pyramid::check_divisible(height, width, cfg.levels);
  using attention::AttentionConfig;
  using attention::Mhcca;
  using attention::Mhsa;
  using blocks::Lrdc;
  ModelCosts c;
  auto pw = [&](Index pixels, Index in, Index out) {
    c.params += static_cast<std::uint64_t>(in * out + out);
    c.macs += static_cast<std::uint64_t>(pixels * in * out);
  };
  const int L = cfg.levels;
  const Index p_low = (height >> L) * (width >> L);
  pw(p_low, cfg.in_channels, cfg.width);
  for (int i = 0; i < cfg.lrdc_counts[0]; ++i) {
    c.params += static_cast<std::uint64_t>(Lrdc<float>::analytic_params(cfg.width));
    c.macs += Lrdc<float>::analytic_macs(p_low, cfg.width);
  }
  const AttentionConfig low{cfg.width, cfg.heads, cfg.out_channels};
  c.params += static_cast<std::uint64_t>(Mhsa<float>::analytic_params(low));
  c.macs += Mhsa<float>::analytic_macs(p_low, low);
  for (int l = L - 1; l >= 0; --l) {
    const Index p = (height >> l) * (width >> l);
    const Index w = cfg.width_at(l);
    pw(p, cfg.inputs_at(l), w);
    for (int i = 0; i < cfg.blocks_at(l); ++i) {
      c.params += static_cast<std::uint64_t>(Lrdc<float>::analytic_params(w));
      c.macs += Lrdc<float>::analytic_macs(p, w);
    }
    const AttentionConfig a{w, cfg.heads, cfg.out_channels};
    c.params += static_cast<std::uint64_t>(Mhcca<float>::analytic_params(a));
    c.macs += Mhcca<float>::analytic_macs(p, a);
  }
  return c;
}

}  // namespace lpcgmn
