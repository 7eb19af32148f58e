#include "lpcgmn/pyramid.hpp"
#include "support.hpp"

#include <doctest.h>
#include <json.hpp>

using namespace lpcgmn;
using testsupport::random_matrix;

TEST_CASE("blur of an interior impulse is the separable binomial kernel") {
  Matrix<double> img = Matrix<double>::Zero(9, 9);
  img(4, 4) = 1.0;
  const auto b = pyramid::blur(img);
  const double k[5] = {1, 4, 6, 4, 1};
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) CHECK(b(2 + i, 2 + j) == doctest::Approx(k[i] * k[j] / 256.0).epsilon(1e-15));
  CHECK(b.sum() == doctest::Approx(1.0));
  CHECK(b(0, 0) == 0.0);
}

TEST_CASE("blur reflects at the border") {
  // corner impulse: the mirror excludes the edge sample, so nothing folds back onto it
  Matrix<double> img = Matrix<double>::Zero(6, 6);
  img(0, 0) = 1.0;
  const auto b = pyramid::blur(img);
  CHECK(b(0, 0) == doctest::Approx(36.0 / 256.0));
  CHECK(b(1, 0) == doctest::Approx(24.0 / 256.0));
  CHECK(b(2, 2) == doctest::Approx(1.0 / 256.0));
  CHECK(b.sum() == doctest::Approx(121.0 / 256.0));
}

TEST_CASE("downsample keeps even rows and columns") {
  Matrix<double> img(4, 6);
  for (Index j = 0; j < 6; ++j)
    for (Index i = 0; i < 4; ++i) img(i, j) = 10.0 * i + j;
  const auto d = pyramid::downsample(img);
  REQUIRE(d.rows() == 2);
  REQUIRE(d.cols() == 3);
  CHECK(d(0, 0) == 0.0);
  CHECK(d(1, 2) == 24.0);
}

TEST_CASE("upsample preserves constants and matches its adjoint") {
  const Matrix<double> c = Matrix<double>::Constant(4, 8, 0.3);
  const auto u = pyramid::upsample(c);
  REQUIRE(u.rows() == 8);
  REQUIRE(u.cols() == 16);
  CHECK((u.array() - 0.3).abs().maxCoeff() < 1e-15);

  Rng rng(11);
  const auto x = random_matrix(6, 5, rng);
  const auto g = random_matrix(12, 10, rng);
  CHECK(pyramid::upsample(x).cwiseProduct(g).sum() == doctest::Approx(x.cwiseProduct(pyramid::upsample_adjoint(g)).sum()).epsilon(1e-12));
}

TEST_CASE("decompose produces the expected band shapes") {
  Rng rng(1);
  const auto img = random_matrix(32, 64, rng);
  const auto p = pyramid::decompose(img, 3);
  REQUIRE(p.levels() == 3);
  CHECK(p.residuals[0].rows() == 32);
  CHECK(p.residuals[2].cols() == 16);
  CHECK(p.base.rows() == 4);
  CHECK(p.base.cols() == 8);
}

TEST_CASE("reconstruct inverts decompose") {
  Rng rng(2);
  for (int levels = 1; levels <= 4; ++levels) {
    const auto img = random_matrix(48, 32, rng);
    CHECK((pyramid::reconstruct(pyramid::decompose(img, levels)) - img).cwiseAbs().maxCoeff() < 1e-12);
    const Matrix<float> f = img.cast<float>();
    CHECK((pyramid::reconstruct(pyramid::decompose(f, levels)) - f).cwiseAbs().maxCoeff() < 1e-5f);
  }
}

TEST_CASE("decompose is linear") {
  Rng rng(3);
  const auto a = random_matrix(32, 32, rng);
  const auto b = random_matrix(32, 32, rng);
  const auto pa = pyramid::decompose(a, 3);
  const auto pb = pyramid::decompose(b, 3);
  const auto pc = pyramid::decompose<double>(2.5 * a - 0.75 * b, 3);
  for (int l = 0; l < 3; ++l)
    CHECK((pc.residuals[l] - (2.5 * pa.residuals[l] - 0.75 * pb.residuals[l])).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((pc.base - (2.5 * pa.base - 0.75 * pb.base)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("a constant image has zero residuals and a constant base") {
  const auto p = pyramid::decompose<double>(Matrix<double>::Constant(16, 16, 0.7), 2);
  for (const auto& r : p.residuals) CHECK(r.cwiseAbs().maxCoeff() < 1e-15);
  CHECK((p.base.array() - 0.7).abs().maxCoeff() < 1e-15);
}

TEST_CASE("size checks") {
  CHECK_THROWS_AS(pyramid::decompose<double>(Matrix<double>::Zero(24, 32), 4), ShapeError);
  CHECK_THROWS_AS(pyramid::decompose<double>(Matrix<double>::Zero(16, 16), 0), ShapeError);
  CHECK_THROWS_AS(pyramid::reconstruct_step<double>(Matrix<double>::Zero(8, 8), Matrix<double>::Zero(3, 4)), ShapeError);
  CHECK_NOTHROW(pyramid::check_divisible(256, 256, 5));
}

TEST_CASE("band_compare on identical images reports zero differences") {
  Rng rng(4);
  const auto a = random_matrix(32, 32, rng);
  const auto rep = pyramid::band_compare(a, a, 2);
  REQUIRE(rep.bands.size() == 3);
  CHECK(rep.bands[0].name == "r0");
  CHECK(rep.bands[2].name == "base");
  for (const auto& b : rep.bands) {
    CHECK(b.mse == 0.0);
    CHECK(std::isinf(b.psnr));
    CHECK(b.hist_a == b.hist_b);
  }
  CHECK_FALSE(rep.low_band_dominant());
}

TEST_CASE("band_compare flags a base-band shift as low-band dominant") {
  Rng rng(5);
  const auto a = random_matrix(32, 32, rng);
  const Matrix<double> b = (a.array() + 0.2).matrix();
  const auto rep = pyramid::band_compare(a, b, 2);
  CHECK(rep.bands[0].mse < 1e-20);
  CHECK(rep.bands.back().mse == doctest::Approx(0.04));
  CHECK(rep.low_band_dominant());
  const auto j = nlohmann::json::parse(pyramid::to_json(rep));
  CHECK(j.at("low_band_dominant").get<bool>());
  CHECK(j.at("bands").size() == 3);
  CHECK(j.at("bands").at(0).at("histogram").at("a").size() == 32);
}
