#include "lpcgmn/metrics.hpp"
#include "support.hpp"

#include <doctest.h>
#include <json.hpp>

using namespace lpcgmn;

namespace {

Matrix<double> as_matrix(std::initializer_list<double> v, Index rows) {
  Matrix<double> m(rows, static_cast<Index>(v.size()) / rows);
  Index i = 0;
  for (double x : v) m(i++) = x;
  return m;
}

}  // namespace

TEST_CASE("frozen values on a 2x3 pair") {
  const auto x = as_matrix({0.1, 0.4, 0.7, 0.2, 0.9, 0.5}, 2);
  const auto y = as_matrix({0.2, 0.35, 0.6, 0.3, 0.8, 0.55}, 2);
  CHECK(metrics::mse(x, y) == doctest::Approx(0.0075).epsilon(1e-14));
  CHECK(metrics::rmse(x, y) == doctest::Approx(std::sqrt(0.0075)).epsilon(1e-14));
  CHECK(metrics::nmse(x, y) == doctest::Approx(0.02893890675241157).epsilon(1e-13));
  CHECK(metrics::ssim(x, y) == doctest::Approx(0.9363567791815953).epsilon(1e-13));
  CHECK(metrics::psnr(x, y) == doctest::Approx(21.249387366083).epsilon(1e-12));
}

TEST_CASE("identical images") {
  Rng rng(1);
  const auto a = testsupport::random_matrix(8, 8, rng);
  CHECK(metrics::mse(a, a) == 0.0);
  CHECK(metrics::nmse(a, a) == 0.0);
  CHECK(metrics::ssim(a, a) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(metrics::psnr(a, a) == metrics::kInfinitePsnr);
}

TEST_CASE("zero predictor has NMSE exactly one") {
  Rng rng(2);
  const auto ref = testsupport::random_matrix(16, 16, rng);
  CHECK(metrics::nmse(Matrix<double>::Zero(16, 16), ref) == 1.0);
}

TEST_CASE("NMSE is invariant to a common scale") {
  Rng rng(3);
  const auto p = testsupport::random_matrix(10, 12, rng);
  const auto r = testsupport::random_matrix(10, 12, rng);
  CHECK(metrics::nmse(3.7 * p, 3.7 * r) == doctest::Approx(metrics::nmse(p, r)).epsilon(1e-13));
}

TEST_CASE("PSNR of a uniform offset") {
  const Matrix<double> a = Matrix<double>::Constant(4, 4, 0.5);
  const Matrix<double> b = Matrix<double>::Constant(4, 4, 0.6);
  // mse 0.01 -> 20 dB on any peak scale
  CHECK(metrics::psnr(a, b) == doctest::Approx(20.0).epsilon(1e-12));
  CHECK(metrics::psnr(a, b, 16) == doctest::Approx(20.0).epsilon(1e-12));
}

TEST_CASE("float inputs are promoted") {
  const Matrix<float> a = Matrix<float>::Constant(3, 3, 0.25f);
  const Matrix<float> b = Matrix<float>::Constant(3, 3, 0.75f);
  CHECK(metrics::mse(a, b) == 0.25);
}

TEST_CASE("errors") {
  CHECK_THROWS_AS(metrics::mse(Matrix<double>::Zero(2, 3), Matrix<double>::Zero(3, 2)), ShapeError);
  CHECK_THROWS_AS(metrics::ssim(Matrix<double>::Zero(2, 3), Matrix<double>::Zero(2, 2)), ShapeError);
  CHECK_THROWS_AS(metrics::nmse(Matrix<double>::Ones(2, 2), Matrix<double>::Zero(2, 2)), RangeError);
}

TEST_CASE("report serialization") {
  metrics::MetricReport r;
  r.mse = 0.1;
  r.nmse = 0.2;
  r.rmse = std::sqrt(0.1);
  r.ssim = 0.9;
  r.samples = 5;
  r.parameters = 1234;
  r.flops = 987654321;
  const auto j = nlohmann::json::parse(metrics::to_json(r));
  CHECK(j.at("psnr").get<std::string>() == "inf");
  CHECK(j.at("nmse").get<double>() == 0.2);
  CHECK(j.at("flops").get<std::uint64_t>() == 987654321u);

  CHECK(metrics::csv_header() == "mse,nmse,rmse,ssim,psnr,samples,parameters,flops,wall_seconds");
  const auto row = metrics::to_csv_row(r);
  CHECK(row.rfind("0.10000000000000001,0.20000000000000001,", 0) == 0);
  CHECK(row.find(",inf,5,1234,987654321,") != std::string::npos);

  const auto table = metrics::to_table(r);
  CHECK(table.find("0.316228") != std::string::npos);
  CHECK(table.find("9.87654e+08") != std::string::npos);
}
