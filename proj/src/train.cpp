#include "lpcgmn/train.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <numeric>

namespace lpcgmn::train {

using json = nlohmann::json;

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("train.epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("train.learning_rate must be positive");
  if (optimizer != "adam") throw ConfigError("train.optimizer must be \"adam\", got \"" + optimizer + "\"");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("train.adam_betas must lie in [0, 1)");
  if (!(adam_eps > 0.0)) throw ConfigError("train.adam_eps must be positive");
  for (double r : split_ratio)
    if (!(r > 0.0)) throw ConfigError("train.split_ratio entries must be positive");
}

Example make_example(const DatasetPair& pair, Index in_channels) {
  return {pair.id, make_input<float>(pair.city, in_channels), pair.gain.values.cast<float>()};
}

std::vector<Example> make_examples(const std::vector<DatasetPair>& pairs, Index in_channels) {
  std::vector<Example> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back(make_example(p, in_channels));
  return out;
}

Split split(std::size_t n, const std::array<double, 3>& ratio, std::uint64_t seed) {
  if (n < 3) throw RangeError("split: need at least 3 samples, got " + std::to_string(n));
  for (double r : ratio)
    if (!(r > 0.0)) throw RangeError("split: ratio parts must be positive");
  const double total = ratio[0] + ratio[1] + ratio[2];
  // Exact for the integer ratios configs use; the epsilon guards 0.1-style inputs.
  const auto n_val = static_cast<std::size_t>(std::floor(double(n) * ratio[1] / total + 1e-9));
  const auto n_test = static_cast<std::size_t>(std::floor(double(n) * ratio[2] / total + 1e-9));
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = n - 1; i > 0; --i)
    std::swap(perm[i], perm[static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(i)))]);
  Split s;
  s.val.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_val));
  s.test.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_val), perm.begin() + static_cast<std::ptrdiff_t>(n_val + n_test));
  s.train.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_val + n_test), perm.end());
  return s;
}

double loss(const std::vector<Matrix<float>>& pred, const std::vector<Matrix<float>>& target) {
  if (pred.size() != target.size()) throw ShapeError("loss: batch sizes differ");
  if (pred.empty()) throw ShapeError("loss: empty batch");
  double sum = 0.0;
  double count = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i].rows() != target[i].rows() || pred[i].cols() != target[i].cols())
      throw ShapeError("loss: prediction and target shapes differ");
    sum += (pred[i].cast<double>() - target[i].cast<double>()).squaredNorm();
    count += double(pred[i].size());
  }
  return sum / count;
}

// ---------------------------------------------------------------------------

NonFiniteLoss::NonFiniteLoss(int e, int b, double l)
    : Error("non-finite loss " + std::to_string(l) + " at epoch " + std::to_string(e) + ", batch " + std::to_string(b)),
      epoch(e),
      batch(b),
      loss(l) {}

NamedTensors snapshot(Network<float>& model) {
  NamedTensors out;
  model.visit("", [&](const std::string& name, Param<float>& p) { out.emplace_back(name, p.value); });
  return out;
}

void restore(Network<float>& model, const NamedTensors& params) {
  std::size_t i = 0;
  model.visit("", [&](const std::string& name, Param<float>& p) {
    if (i >= params.size() || params[i].first != name) throw LoadError("restore: parameter '" + name + "' missing");
    if (params[i].second.rows() != p.value.rows() || params[i].second.cols() != p.value.cols())
      throw LoadError("restore: shape mismatch for '" + name + "'");
    p.value = params[i].second;
    ++i;
  });
  if (i != params.size()) throw LoadError("restore: unexpected extra parameters");
}

double dataset_loss(Network<float>& model, const std::vector<Example>& data) {
  if (data.empty()) throw RangeError("dataset_loss: empty dataset");
  double sum = 0.0;
  for (const auto& ex : data) sum += metrics::mse(model.predict(ex.input), ex.target);
  return sum / double(data.size());
}

RunRecord fit(Network<float>& model, const std::vector<Example>& train, const std::vector<Example>& val,
              const TrainConfig& cfg, TrainerState& state, const EpochCallback& on_epoch) {
  cfg.validate();
  if (train.empty()) throw RangeError("fit: empty training set");
  const std::vector<Example>& selection = val.empty() ? train : val;
  const AdamHyper hyper{cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps};
  if (state.best_params.empty()) state.best_params = snapshot(model);

  std::vector<std::size_t> order(train.size());
  for (int epoch = state.next_epoch; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng = Rng::derive(cfg.seed, static_cast<std::uint64_t>(epoch));
    for (std::size_t i = order.size() - 1; i > 0; --i)
      std::swap(order[i], order[static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(i)))]);

    double epoch_sum = 0.0;
    int batch = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size), ++batch) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const auto bsz = static_cast<float>(end - start);
      zero_grad(model);
      double batch_sum = 0.0;
      for (std::size_t k = start; k < end; ++k) {
        const Example& ex = train[order[k]];
        const Matrix<float> out = model.forward(ex.input);
        const Matrix<float> diff = out - ex.target;
        const double mse = diff.cast<double>().squaredNorm() / double(diff.size());
        batch_sum += mse;
        model.backward(diff * (2.0f / (float(diff.size()) * bsz)));
      }
      const double batch_loss = batch_sum / double(end - start);
      if (!std::isfinite(batch_loss)) throw NonFiniteLoss(epoch, batch, batch_loss);
      adam_step(model, state.adam, hyper);
      epoch_sum += batch_sum;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = epoch_sum / double(train.size());
    rec.val_loss = dataset_loss(model, selection);
    if (!std::isfinite(rec.val_loss)) throw NonFiniteLoss(epoch, -1, rec.val_loss);
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    state.record.epochs.push_back(rec);
    if (rec.val_loss < state.record.best_val_loss) {
      state.record.best_val_loss = rec.val_loss;
      state.record.best_epoch = epoch;
      state.best_params = snapshot(model);
    }
    state.next_epoch = epoch + 1;
    if (on_epoch) on_epoch(state, model);
  }
  restore(model, state.best_params);
  return state.record;
}

RunRecord fit(Network<float>& model, const std::vector<Example>& train, const std::vector<Example>& val,
              const TrainConfig& cfg) {
  TrainerState state;
  return fit(model, train, val, cfg, state);
}

// ---------------------------------------------------------------------------

metrics::MetricReport evaluate_predictions(const std::vector<Matrix<float>>& pred, const std::vector<Example>& data) {
  if (data.empty()) throw RangeError("evaluate: empty dataset");
  if (pred.size() != data.size()) throw ShapeError("evaluate: prediction count differs from dataset size");
  metrics::MetricReport r;
  double mse = 0.0, nmse = 0.0, ssim = 0.0, psnr = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    mse += metrics::mse(pred[i], data[i].target);
    nmse += metrics::nmse(pred[i], data[i].target);
    ssim += metrics::ssim(pred[i], data[i].target);
    psnr += metrics::psnr(pred[i], data[i].target, 8);
  }
  const double n = double(data.size());
  r.mse = mse / n;
  r.rmse = std::sqrt(r.mse);
  r.nmse = nmse / n;
  r.ssim = ssim / n;
  r.psnr = psnr / n;
  r.samples = data.size();
  return r;
}

metrics::MetricReport evaluate(Network<float>& model, const std::vector<Example>& data) {
  if (data.empty()) throw RangeError("evaluate: empty dataset");
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<Matrix<float>> pred;
  pred.reserve(data.size());
  for (const auto& ex : data) pred.push_back(model.predict(ex.input));
  auto r = evaluate_predictions(pred, data);
  r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const auto costs = count_costs(model.config(), data.front().input.height, data.front().input.width);
  r.parameters = costs.params;
  r.flops = costs.macs;
  return r;
}

metrics::MetricReport zero_shot(Network<float>& model, const std::vector<Example>& data) {
  for (const auto& ex : data) {
    if (ex.input.channels() != model.config().in_channels)
      throw ShapeError("zero_shot: sample '" + ex.id + "' has " + std::to_string(ex.input.channels()) +
                       " input channels, model expects " + std::to_string(model.config().in_channels));
    pyramid::check_divisible(ex.input.height, ex.input.width, model.config().levels);
  }
  return evaluate(model, data);
}

Matrix<float> mean_predictor(const std::vector<Example>& train) {
  if (train.empty()) throw RangeError("mean_predictor: empty training set");
  Matrix<double> acc = Matrix<double>::Zero(train.front().target.rows(), train.front().target.cols());
  for (const auto& ex : train) {
    if (ex.target.rows() != acc.rows() || ex.target.cols() != acc.cols()) throw ShapeError("mean_predictor: shapes differ");
    acc += ex.target.cast<double>();
  }
  return (acc / double(train.size())).cast<float>();
}

// ---------------------------------------------------------------------------

std::string RunRecord::to_json() const {
  json ep = json::array();
  for (const auto& e : epochs)
    ep.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_loss", e.val_loss}, {"seconds", e.seconds}});
  json j = {{"epochs", ep}, {"best_epoch", best_epoch}, {"best_val_loss", best_epoch >= 0 ? json(best_val_loss) : json(nullptr)}};
  if (has_test) j["test"] = json::parse(metrics::to_json(test));
  return j.dump(2);
}

}  // namespace lpcgmn::train
