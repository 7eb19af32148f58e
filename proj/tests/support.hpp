#pragma once

#include "lpcgmn/blocks.hpp"
#include "lpcgmn/rng.hpp"

#include <cstdlib>
#include <filesystem>
#include <string>

namespace testsupport {

using namespace lpcgmn;

template <typename Scalar = double>
Matrix<Scalar> random_matrix(Index rows, Index cols, Rng& rng, double lo = 0.0, double hi = 1.0) {
  Matrix<Scalar> m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m(i) = static_cast<Scalar>(rng.uniform(lo, hi));
  return m;
}

template <typename Scalar = double>
FeatureMap<Scalar> random_map(Index h, Index w, Index c, Rng& rng, double lo = -1.0, double hi = 1.0) {
  return FeatureMap<Scalar>(h, w, random_matrix<Scalar>(h * w, c, rng, lo, hi));
}

struct GradResult {
  double rel_error = 0.0;  // ||num - an|| / (||num|| + ||an||)
  int checked = 0;
};

inline double rel(double num_sq, double an_sq, double diff_sq) {
  const double denom = std::sqrt(num_sq) + std::sqrt(an_sq);
  return denom > 0 ? std::sqrt(diff_sq) / denom : 0.0;
}

// Central differences of L = sum(f(x) .* R) against backward(R), over every
// `stride`-th entry of each parameter and of the input.
template <typename Module>
GradResult grad_check(Module& m, const FeatureMap<double>& x, std::uint64_t seed, Index stride = 1, double h = 1e-5) {
  Rng rng(seed);
  const FeatureMap<double> y0 = m.forward(x);
  const Matrix<double> r = random_matrix(y0.data.rows(), y0.data.cols(), rng, -1.0, 1.0);
  auto loss = [&](const FeatureMap<double>& in) { return m.forward(in).data.cwiseProduct(r).sum(); };
  zero_grad(m);
  (void)m.forward(x);
  const FeatureMap<double> dx = m.backward(FeatureMap<double>(y0.height, y0.width, r));
  double n2 = 0, a2 = 0, d2 = 0;
  int checked = 0;
  auto account = [&](double num, double an) {
    n2 += num * num;
    a2 += an * an;
    d2 += (num - an) * (num - an);
    ++checked;
  };
  m.visit("", [&](const std::string&, Param<double>& p) {
    for (Index i = 0; i < p.size(); i += stride) {
      const double v = p.value(i);
      p.value(i) = v + h;
      const double lp = loss(x);
      p.value(i) = v - h;
      const double lm = loss(x);
      p.value(i) = v;
      account((lp - lm) / (2 * h), p.grad(i));
    }
  });
  FeatureMap<double> xp = x;
  for (Index i = 0; i < x.data.size(); i += stride) {
    const double v = x.data(i);
    xp.data(i) = v + h;
    const double lp = loss(xp);
    xp.data(i) = v - h;
    const double lm = loss(xp);
    xp.data(i) = v;
    account((lp - lm) / (2 * h), dx.data(i));
  }
  return {rel(n2, a2, d2), checked};
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  const char* base = std::getenv("TMPDIR");
  auto p = std::filesystem::path(base && *base ? base : "/tmp") / ("lpcgmn_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace testsupport
