#include "lpcgmn/lpcgmn.hpp"
#include "support.hpp"

#include <doctest.h>

#include <set>

using namespace lpcgmn;
using testsupport::random_map;
using testsupport::random_matrix;

namespace {

ModelConfig small(int levels, Index width = 8, int heads = 2) {
  ModelConfig c;
  c.levels = levels;
  c.width = width;
  c.heads = heads;
  c.lrdc_counts = {2, 1, 1, 1};
  return c;
}

}  // namespace

TEST_CASE("config validation and level layout") {
  ModelConfig c;
  CHECK_NOTHROW(c.validate());
  CHECK(c.resolved_fine_width() == 32);
  CHECK(c.width_at(2) == 64);
  CHECK(c.width_at(0) == 32);
  CHECK(c.blocks_at(2) == 3);
  CHECK(c.blocks_at(1) == 3);
  CHECK(c.blocks_at(0) == 2);
  CHECK(c.inputs_at(2) == 5);
  CHECK(c.inputs_at(0) == 4);
  c.reinject = false;
  CHECK(c.inputs_at(0) == 3);

  auto bad = [](auto mutate) {
    ModelConfig m;
    mutate(m);
    CHECK_THROWS_AS(m.validate(), ConfigError);
  };
  bad([](ModelConfig& m) { m.levels = 0; });
  bad([](ModelConfig& m) { m.heads = 3; });
  bad([](ModelConfig& m) { m.dilations = {}; });
  bad([](ModelConfig& m) { m.dilations = {1, 0}; });
  bad([](ModelConfig& m) { m.lrdc_counts[1] = -1; });
  bad([](ModelConfig& m) { m.fine_width = 5; });
  bad([](ModelConfig& m) { m.out_channels = 2; });
  CHECK_THROWS_AS(Network<float>(ModelConfig{.levels = 9}, 0), ConfigError);
}

TEST_CASE("bilinear x2 upsampling") {
  Matrix<double> x(2, 1);
  x << 1.0, 3.0;
  const auto u = bilinear_up(x);
  REQUIRE(u.rows() == 4);
  REQUIRE(u.cols() == 2);
  CHECK(u(0, 0) == 1.0);
  CHECK(u(1, 0) == 1.5);
  CHECK(u(2, 1) == 2.5);
  CHECK(u(3, 1) == 3.0);
  Rng rng(1);
  const auto a = random_matrix(3, 5, rng);
  const auto g = random_matrix(6, 10, rng);
  CHECK(bilinear_up(a).cwiseProduct(g).sum() == doctest::Approx(a.cwiseProduct(bilinear_up_adjoint(g)).sum()).epsilon(1e-13));
  CHECK((bilinear_up<double>(Matrix<double>::Constant(3, 3, 0.4)).array() - 0.4).abs().maxCoeff() < 1e-15);
}

TEST_CASE("input planes") {
  CityMap city;
  city.environment_mask = Eigen::MatrixXd::Constant(4, 4, 1.0);
  city.transmitter_map = Eigen::MatrixXd::Zero(4, 4);
  const auto x = make_input<float>(city, 2);
  CHECK(x.channels() == 2);
  CHECK(x.plane(0).sum() == 16.0f);
  CHECK(make_input<float>(city, 1).channels() == 1);
  CHECK_THROWS_AS(make_input<float>(city, 3), ConfigError);
}

TEST_CASE("counted costs match the instrumented forward pass") {
  for (int levels = 1; levels <= 4; ++levels)
    for (int heads : {1, 2}) {
      ModelConfig c = small(levels, 8, heads);
      c.reinject = levels % 2 == 0;
      Network<float> net(c, 1);
      Rng rng(2);
      instrument::MacScope scope;
      (void)net.forward(random_map<float>(32, 32, 2, rng, 0.0, 1.0));
      const auto costs = count_costs(c, 32, 32);
      CHECK(scope.count() == costs.macs);
      CHECK(static_cast<std::uint64_t>(parameter_count(net)) == costs.params);
    }
  CHECK_THROWS_AS(count_costs(small(3), 20, 32), ShapeError);
}

TEST_CASE("frozen cost table at 256x256") {
  ModelConfig c;
  c.heads = 1;
  const auto k = count_costs(c, 256, 256);
  CHECK(k.params == 127751);
  CHECK(k.macs == 1439367168);
  std::uint64_t prev = ~0ull;
  for (int levels = 1; levels <= 5; ++levels) {
    ModelConfig m = c;
    m.levels = levels;
    const auto cost = count_costs(m, 256, 256).macs;
    CHECK(cost < prev);
    prev = cost;
  }
}

TEST_CASE("passthrough reproduces the input exactly") {
  Rng rng(3);
  for (int levels : {1, 3, 5}) {
    ModelConfig c = small(levels);
    c.in_channels = 1;
    Network<double> net(c, 0);
    net.set_passthrough(true);
    const auto x = random_map(64, 32, 1, rng, 0.0, 1.0);
    CHECK((net.forward(x) - Matrix<double>(x.plane(0))).cwiseAbs().maxCoeff() < 1e-12);
    for (int l = 0; l < levels; ++l) CHECK(net.refinement_map(l).isOnes());
  }
  // two channels: reconstruction of the channel mean
  ModelConfig c = small(2);
  Network<double> net(c, 0);
  net.set_passthrough(true);
  const auto x = random_map(16, 16, 2, rng, 0.0, 1.0);
  const Matrix<double> mean = (x.plane(0) + x.plane(1)) / 2.0;
  CHECK((net.forward(x) - mean).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("forward shapes, clamping and determinism") {
  Rng rng(4);
  const auto x = random_map<float>(32, 32, 2, rng, 0.0, 1.0);
  Network<float> a(small(3), 11), b(small(3), 11), c(small(3), 12);
  const auto ya = a.forward(x);
  CHECK(ya.rows() == 32);
  CHECK(ya.cols() == 32);
  CHECK(a.low_estimate().rows() == 4);
  CHECK(a.refinement_map(2).rows() == 8);
  CHECK(a.level_attention(0).attention(0).rows() == 2);
  CHECK(a.low_attention().attention(0).rows() == 16);
  CHECK(ya == b.forward(x));
  CHECK(ya != c.forward(x));
  const auto p = a.predict(x);
  CHECK(p.minCoeff() >= 0.0f);
  CHECK(p.maxCoeff() <= 1.0f);
  CHECK(p == ya.cwiseMax(0.0f).cwiseMin(1.0f));
  CHECK_THROWS_AS(a.forward(random_map<float>(32, 32, 1, rng)), ShapeError);
  CHECK_THROWS_AS(a.forward(random_map<float>(36, 32, 2, rng)), ShapeError);
}

TEST_CASE("parameter names are unique and structured") {
  Network<float> net(small(2), 0);
  std::set<std::string> names;
  int count = 0;
  net.visit([&](const std::string& name, Param<float>&) {
    names.insert(name);
    ++count;
  });
  CHECK(names.size() == static_cast<std::size_t>(count));
  CHECK(names.count("low.expand.weight") == 1);
  CHECK(names.count("low.mhsa.head1.wq") == 1);
  CHECK(names.count("level1.proj.bias") == 1);
  CHECK(names.count("level0.lrdc0.dw.weight") == 1);
  CHECK(names.count("level0.mhcca.temperature") == 1);
}

TEST_CASE("end-to-end gradient on sampled parameters") {
  ModelConfig c = small(2);
  Network<double> net(c, 5);
  Rng rng(6);
  const auto x = random_map(32, 32, 2, rng, 0.0, 1.0);
  const auto r = random_matrix(32, 32, rng, -1.0, 1.0);
  auto loss = [&] { return net.forward(x).cwiseProduct(r).sum(); };
  zero_grad(net);
  (void)net.forward(x);
  net.backward(r);
  double n2 = 0, a2 = 0, d2 = 0;
  Index seen = 0;
  net.visit([&](const std::string&, Param<double>& p) {
    for (Index i = 0; i < p.size(); ++i, ++seen) {
      if (seen % 37 != 0) continue;
      const double v = p.value(i);
      p.value(i) = v + 1e-5;
      const double lp = loss();
      p.value(i) = v - 1e-5;
      const double lm = loss();
      p.value(i) = v;
      const double num = (lp - lm) / 2e-5;
      n2 += num * num;
      a2 += p.grad(i) * p.grad(i);
      d2 += (num - p.grad(i)) * (num - p.grad(i));
    }
  });
  CHECK(testsupport::rel(n2, a2, d2) < 1e-6);
}
