#include "lpcgmn/blocks.hpp"
#include "support.hpp"

#include <doctest.h>

using namespace lpcgmn;
using namespace lpcgmn::blocks;
using testsupport::grad_check;
using testsupport::random_map;

TEST_CASE("parameter and cost formulas") {
  const auto s = ConvSpec::same(3, 8, 16, 1, 1, 32, 32);
  CHECK(n_standard(s) == 1152.0);
  CHECK(n_separable(s) == 200.0);
  CHECK(param_ratio(s) == doctest::Approx(200.0 / 1152.0).epsilon(1e-15));
  CHECK(flops_standard(s) == 1152.0 * 1024);
  CHECK(flops_separable(s) == 9.0 * 1024 * 8 + 8.0 * 1024 * 16);
  CHECK(flops_ratio(s) == doctest::Approx(flops_separable(s) / flops_standard(s)).epsilon(1e-15));

  const auto strided = ConvSpec::same(5, 4, 6, 2, 2, 15, 10);
  CHECK(strided.h_out == 8);
  CHECK(strided.w_out == 5);
  CHECK(flops_ratio(strided) == doctest::Approx(flops_separable(strided) / flops_standard(strided)).epsilon(1e-14));

  CHECK_THROWS_AS(ConvSpec::same(3, 0, 1, 1, 1, 4, 4), RangeError);
  ConvSpec bad = s;
  bad.h_out = 31;
  CHECK_THROWS_AS(bad.validate(), ShapeError);
}

TEST_CASE("effective kernel and receptive field") {
  CHECK(effective_kernel(3, 1) == 3);
  CHECK(effective_kernel(3, 2) == 5);
  CHECK(effective_kernel(3, 3) == 7);
  CHECK(effective_kernel(5, 4) == 17);
  CHECK_THROWS_AS(effective_kernel(0, 1), RangeError);
  // 3x3 d1, 3x3 d2 stride 2, 3x3 d3: 1 + 2 + 4 + 6*2
  const std::vector<ConvSpec> stack = {ConvSpec::same(3, 1, 1, 1, 1, 16, 16), ConvSpec::same(3, 1, 1, 2, 2, 16, 16),
                                       ConvSpec::same(3, 1, 1, 3, 1, 8, 8)};
  CHECK(receptive_field(stack) == 19);
  CHECK(receptive_field({ConvSpec::same(7, 1, 1, 1, 1, 8, 8)}) == 7);
  CHECK_THROWS_AS(receptive_field({}), RangeError);
}

TEST_CASE("dilated 1-D convolution") {
  Vector<double> x(5);
  x << 1, 2, 3, 4, 5;
  Vector<double> w(2);
  w << 1, 1;
  Vector<double> expected(5);
  expected << 5, 7, 9, 9, 7;
  CHECK(dilated_conv_1d(x, w, 1) == expected);
  Vector<double> expected2(5);
  expected2 << 8, 8, 8, 6, 4;  // x[i+2] + x[i+4], mirrored
  CHECK(dilated_conv_1d(x, w, 2) == expected2);
  CHECK_THROWS_AS(dilated_conv_1d(x, w, 0), RangeError);
}

TEST_CASE("gelu") {
  Matrix<double> x(1, 3);
  x << -1.0, 0.0, 1.0;
  const auto y = gelu(x);
  CHECK(y(0) == doctest::Approx(-0.15865525393145707).epsilon(1e-14));
  CHECK(y(1) == 0.0);
  CHECK(y(2) == doctest::Approx(0.8413447460685429).epsilon(1e-14));
  const auto g = gelu_backward<double>(x, Matrix<double>::Ones(1, 3));
  CHECK(g(1) == doctest::Approx(0.5));
  CHECK(g(2) == doctest::Approx(0.8413447460685429 + 0.24197072451914337).epsilon(1e-13));
}

TEST_CASE("depthwise conv: identity tap and reflect padding") {
  DepthwiseDilatedConv<double> dw(2, 2);
  dw.weight().value.setZero();
  dw.weight().value(4, 0) = 1.0;  // centre tap on channel 0
  dw.weight().value(5, 1) = 1.0;  // a = 2, b = 1: row offset +2
  Rng rng(1);
  const auto x = random_map(5, 4, 2, rng);
  const auto y = dw.forward(x);
  CHECK(y.plane(0) == x.plane(0));
  CHECK(y.plane(1)(0, 1) == x.plane(1)(2, 1));
  CHECK(y.plane(1)(4, 3) == x.plane(1)(2, 3));  // row 6 mirrors to 2
  CHECK_THROWS_AS(DepthwiseDilatedConv<double>(2, 1, 4), RangeError);
  CHECK_THROWS_AS(dw.forward(random_map(4, 4, 3, rng)), ShapeError);
}

TEST_CASE("separable conv equals a standard conv with the factorized kernel") {
  Rng rng(2);
  for (int stride : {1, 2}) {
    const auto s = ConvSpec::same(3, 3, 5, 2, stride, 10, 9);
    SeparableConv<double> sep(s);
    sep.init(rng);
    StandardConv<double> std_conv(s);
    std_conv.weight().value = sep.dense_kernel();
    const auto x = random_map(10, 9, 3, rng);
    instrument::MacScope a;
    const auto ys = sep.apply(x);
    const auto sep_macs = a.count();
    instrument::MacScope b;
    const auto yd = std_conv.apply(x);
    CHECK(b.count() == static_cast<std::uint64_t>(flops_standard(s)));
    CHECK(sep_macs == static_cast<std::uint64_t>(flops_separable(s)));
    CHECK((ys.data - yd.data).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(parameter_count(sep) == static_cast<Index>(n_separable(s)));
    CHECK(parameter_count(std_conv) == static_cast<Index>(n_standard(s)));
  }
}

TEST_CASE("instance norm output statistics") {
  Rng rng(3);
  InstanceNorm<double> in(3);
  const auto x = random_map(6, 6, 3, rng, -5.0, 9.0);
  const auto y = in.forward(x.data);
  for (Index c = 0; c < 3; ++c) {
    CHECK(std::abs(y.col(c).mean()) < 1e-12);
    CHECK(y.col(c).squaredNorm() / 36.0 == doctest::Approx(1.0).epsilon(1e-4));
  }
}

TEST_CASE("LRDC counts") {
  for (Index c : {4, 16, 64}) {
    Lrdc<float> block({c, 2, 3});
    CHECK(parameter_count(block) == 2 * c * c + 12 * c);
    CHECK(Lrdc<float>::analytic_params(c) == 2 * c * c + 12 * c);
    Rng rng(4);
    block.init(rng);
    instrument::MacScope scope;
    (void)block.forward(random_map<float>(8, 8, c, rng));
    CHECK(scope.count() == Lrdc<float>::analytic_macs(64, c));
    CHECK(scope.count() == static_cast<std::uint64_t>(64 * (2 * c * c + 9 * c)));
  }
  Lrdc<float> block({4, 1, 3});
  Rng rng(5);
  CHECK_THROWS_AS(block.forward(random_map<float>(4, 4, 3, rng)), ShapeError);
}

TEST_CASE("gradients") {
  Rng rng(6);
  SUBCASE("pointwise") {
    PointwiseConv<double> pw(3, 4);
    pw.init(rng);
    CHECK(grad_check(pw, random_map(4, 5, 3, rng), 1).rel_error < 1e-7);
  }
  SUBCASE("depthwise") {
    DepthwiseDilatedConv<double> dw(2, 3);
    dw.init(rng);
    CHECK(grad_check(dw, random_map(7, 6, 2, rng), 2).rel_error < 1e-7);
  }
  SUBCASE("instance norm") {
    InstanceNorm<double> in(3);
    in.visit("", [&](const std::string&, Param<double>& p) { p.fill_uniform(rng, 1.0); });
    CHECK(grad_check(in, random_map(5, 5, 3, rng), 3).rel_error < 1e-7);
  }
  SUBCASE("lrdc") {
    for (int d : {1, 2, 3}) {
      Lrdc<double> block({4, d, 3});
      block.init(rng);
      const auto r = grad_check(block, random_map(8, 8, 4, rng), 4);
      CHECK(r.rel_error < 1e-6);
      CHECK(r.checked == parameter_count(block) + 8 * 8 * 4);
    }
  }
}
