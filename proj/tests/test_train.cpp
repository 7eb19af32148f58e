#include "lpcgmn/synthgen.hpp"
#include "lpcgmn/train.hpp"
#include "support.hpp"

#include <doctest.h>
#include <json.hpp>

#include <algorithm>
#include <set>

using namespace lpcgmn;
using namespace lpcgmn::train;

namespace {

std::vector<Example> tiny_examples(std::size_t n, Index side = 32) {
  synth::SynthConfig c;
  c.grid = GridSpec{1.0, 1.0, side, side};
  c.scene.building_size_max = 6;
  c.scene.n_buildings = 3;
  return make_examples(synth::generate_dataset(c, n), 2);
}

ModelConfig tiny_model() {
  ModelConfig m;
  m.levels = 2;
  m.width = 8;
  m.heads = 2;
  m.lrdc_counts = {1, 1, 1, 1};
  return m;
}

}  // namespace

TEST_CASE("split sizes") {
  auto sizes = [](std::size_t n, std::array<double, 3> r) {
    const auto s = split(n, r, 0);
    return std::array<std::size_t, 3>{s.train.size(), s.val.size(), s.test.size()};
  };
  CHECK(sizes(500, {8, 1, 1}) == std::array<std::size_t, 3>{400, 50, 50});
  CHECK(sizes(56000, {5, 1, 1}) == std::array<std::size_t, 3>{40000, 8000, 8000});
  CHECK(sizes(10, {0.8, 0.1, 0.1}) == std::array<std::size_t, 3>{8, 1, 1});
  CHECK(sizes(7, {5, 1, 1}) == std::array<std::size_t, 3>{5, 1, 1});
  CHECK(sizes(3, {5, 1, 1}) == std::array<std::size_t, 3>{3, 0, 0});
  CHECK_THROWS_AS(split(2, {1, 1, 1}, 0), RangeError);
  CHECK_THROWS_AS(split(10, {1, 0, 1}, 0), RangeError);
}

TEST_CASE("split is a seeded partition") {
  const auto a = split(100, {5, 1, 1}, 42);
  const auto b = split(100, {5, 1, 1}, 42);
  const auto c = split(100, {5, 1, 1}, 43);
  CHECK(a.train == b.train);
  CHECK(a.test == b.test);
  CHECK(a.val != c.val);
  std::set<std::size_t> all(a.train.begin(), a.train.end());
  all.insert(a.val.begin(), a.val.end());
  all.insert(a.test.begin(), a.test.end());
  CHECK(all.size() == 100);
  CHECK(*all.rbegin() == 99);
  CHECK(select(std::vector<int>{10, 20, 30}, {2, 0}) == std::vector<int>{30, 10});
}

TEST_CASE("batch loss is the metric MSE averaged over the batch") {
  Rng rng(1);
  std::vector<Matrix<float>> p, t;
  double expected = 0.0;
  for (int i = 0; i < 4; ++i) {
    p.push_back(testsupport::random_matrix<float>(8, 8, rng));
    t.push_back(testsupport::random_matrix<float>(8, 8, rng));
    expected += metrics::mse(p.back(), t.back()) / 4.0;
  }
  CHECK(loss(p, t) == doctest::Approx(expected).epsilon(1e-12));
  CHECK_THROWS_AS(loss(p, {}), ShapeError);
  t[1].resize(4, 4);
  CHECK_THROWS_AS(loss(p, t), ShapeError);
}

TEST_CASE("adam") {
  SUBCASE("first step moves each weight by the learning rate against the gradient sign") {
    std::map<std::string, Matrix<double>> params{{"w", Matrix<double>::Zero(1, 3)}};
    Matrix<double> g(1, 3);
    g << 2.0, -0.5, 0.0;
    AdamState<double> st;
    adam_step(params, {{"w", g}}, st, AdamHyper{0.1, 0.9, 0.999, 1e-8});
    CHECK(st.step == 1);
    CHECK(params["w"](0) == doctest::Approx(-0.1).epsilon(1e-7));
    CHECK(params["w"](1) == doctest::Approx(0.1).epsilon(1e-7));
    CHECK(params["w"](2) == 0.0);
  }
  SUBCASE("two steps against a hand iteration") {
    Matrix<double> w = Matrix<double>::Constant(1, 1, 1.0), m = Matrix<double>::Zero(1, 1), v = m;
    const AdamHyper h{0.01, 0.8, 0.9, 1e-8};
    adam_update<double>(w, Matrix<double>::Constant(1, 1, 1.0), m, v, 1, h);
    adam_update<double>(w, Matrix<double>::Constant(1, 1, 3.0), m, v, 2, h);
    const double m2 = 0.8 * 0.2 + 0.2 * 3.0, v2 = 0.9 * 0.1 + 0.1 * 9.0;
    const double expected = 1.0 - 0.01 / (1.0 + 1e-8) - 0.01 * (m2 / 0.36) / (std::sqrt(v2 / 0.19) + 1e-8);
    CHECK(w(0) == doctest::Approx(expected).epsilon(1e-14));
  }
  SUBCASE("missing gradient") {
    std::map<std::string, Matrix<double>> params{{"w", Matrix<double>::Zero(1, 1)}};
    AdamState<double> st;
    CHECK_THROWS_AS(adam_step(params, {}, st, AdamHyper{}), Error);
    CHECK(st.step == 0);
  }
}

TEST_CASE("train config validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.optimizer = "sgd";
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.learning_rate = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.split_ratio = {1, 1, -1};
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("fit lowers the loss, keeps the best epoch and is reproducible") {
  const auto data = tiny_examples(6);
  TrainConfig cfg;
  cfg.epochs = 6;
  cfg.batch_size = 2;
  cfg.learning_rate = 3e-3;
  cfg.seed = 5;
  Network<float> net(tiny_model(), 1);
  const double before = dataset_loss(net, data);
  TrainerState st;
  int calls = 0;
  const auto rec = fit(net, data, {}, cfg, st, [&](const TrainerState& s, Network<float>&) {
    ++calls;
    CHECK(s.next_epoch == calls);
  });
  CHECK(calls == 6);
  REQUIRE(rec.epochs.size() == 6);
  CHECK(rec.best_val_loss < before);
  const auto best = std::min_element(rec.epochs.begin(), rec.epochs.end(),
                                     [](const EpochRecord& a, const EpochRecord& b) { return a.val_loss < b.val_loss; });
  CHECK(rec.best_epoch == best->epoch);
  CHECK(dataset_loss(net, data) == rec.best_val_loss);

  Network<float> again(tiny_model(), 1);
  const auto rec2 = fit(again, data, {}, cfg);
  for (std::size_t i = 0; i < rec.epochs.size(); ++i) {
    CHECK(rec.epochs[i].train_loss == rec2.epochs[i].train_loss);
    CHECK(rec.epochs[i].val_loss == rec2.epochs[i].val_loss);
  }
  const auto j = nlohmann::json::parse(rec.to_json());
  CHECK(j.at("epochs").size() == 6);
  CHECK(j.at("best_epoch").get<int>() == rec.best_epoch);
  CHECK_FALSE(j.contains("test"));
}

TEST_CASE("interrupted and resumed training matches an uninterrupted run") {
  const auto data = tiny_examples(4);
  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.batch_size = 3;
  cfg.learning_rate = 2e-3;
  Network<float> full(tiny_model(), 2);
  const auto ref = fit(full, data, {}, cfg);

  Network<float> part(tiny_model(), 2);
  TrainerState st;
  NamedTensors latest;
  TrainConfig first = cfg;
  first.epochs = 2;
  fit(part, data, {}, first, st, [&](const TrainerState&, Network<float>& m) { latest = snapshot(m); });
  restore(part, latest);
  const auto resumed = fit(part, data, {}, cfg, st);
  REQUIRE(resumed.epochs.size() == 4);
  for (int e = 0; e < 4; ++e) CHECK(resumed.epochs[e].train_loss == ref.epochs[e].train_loss);
  CHECK(resumed.best_epoch == ref.best_epoch);
}

TEST_CASE("non-finite losses abort training") {
  auto data = tiny_examples(3);
  data[1].target(0, 0) = std::numeric_limits<float>::quiet_NaN();
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 1;
  Network<float> net(tiny_model(), 1);
  try {
    fit(net, data, {}, cfg);
    FAIL("expected NonFiniteLoss");
  } catch (const NonFiniteLoss& e) {
    CHECK(e.epoch == 0);
    CHECK(std::isnan(e.loss));
  }
  CHECK_THROWS_AS(fit(net, {}, {}, cfg), RangeError);
}

TEST_CASE("evaluation") {
  const auto data = tiny_examples(3);
  std::vector<Matrix<float>> perfect;
  for (const auto& ex : data) perfect.push_back(ex.target);
  const auto r = evaluate_predictions(perfect, data);
  CHECK(r.nmse == 0.0);
  CHECK(r.mse == 0.0);
  CHECK(r.samples == 3);
  CHECK(std::isinf(r.psnr));

  std::vector<Matrix<float>> zeros(3, Matrix<float>::Zero(32, 32));
  CHECK(evaluate_predictions(zeros, data).nmse == doctest::Approx(1.0).epsilon(1e-12));

  const auto mean = mean_predictor(data);
  CHECK(mean(5, 7) == doctest::Approx((data[0].target(5, 7) + data[1].target(5, 7) + data[2].target(5, 7)) / 3.0f));

  Network<float> net(tiny_model(), 1);
  const auto e = evaluate(net, data);
  CHECK(e.parameters == count_costs(tiny_model(), 32, 32).params);
  CHECK(e.flops == count_costs(tiny_model(), 32, 32).macs);
  CHECK(e.rmse == doctest::Approx(std::sqrt(e.mse)));
  CHECK(zero_shot(net, data).nmse == e.nmse);

  auto odd = tiny_examples(1, 24);
  ModelConfig deep = tiny_model();
  deep.levels = 4;
  Network<float> deep_net(deep, 1);
  CHECK_THROWS_AS(zero_shot(deep_net, odd), ShapeError);
  odd[0].input = FeatureMap<float>(24, 24, 1);
  CHECK_THROWS_AS(zero_shot(net, odd), ShapeError);
}
