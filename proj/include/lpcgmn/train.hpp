#pragma once

#include "lpcgmn/lpcgmn.hpp"
#include "lpcgmn/metrics.hpp"

#include <array>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <vector>

namespace lpcgmn::train {

struct TrainConfig {
  int epochs = 50;
  int batch_size = 16;
  double learning_rate = 1e-4;
  std::string optimizer = "adam";
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::array<double, 3> split_ratio{5.0, 1.0, 1.0};
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// One network input and its target gain raster.
struct Example {
  std::string id;
  FeatureMap<float> input;
  Matrix<float> target;
};

Example make_example(const DatasetPair& pair, Index in_channels);
std::vector<Example> make_examples(const std::vector<DatasetPair>& pairs, Index in_channels);

// ---------------------------------------------------------------------------
// Split

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

/// Seeded permutation cut into floor(n r_val / sum) validation and
/// floor(n r_test / sum) test indices; the remainder trains.
Split split(std::size_t n, const std::array<double, 3>& ratio, std::uint64_t seed);

template <typename T>
std::vector<T> select(const std::vector<T>& items, const std::vector<std::size_t>& idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(items.at(i));
  return out;
}

// ---------------------------------------------------------------------------
// Loss and optimizer

/// Mean squared error over pixels and batch.
double loss(const std::vector<Matrix<float>>& pred, const std::vector<Matrix<float>>& target);

struct AdamHyper {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename Scalar>
struct AdamState {
  std::int64_t step = 0;
  std::map<std::string, Matrix<Scalar>> m;
  std::map<std::string, Matrix<Scalar>> v;
};

/// One bias-corrected Adam update of `value` at step t (t >= 1).
template <typename Scalar>
void adam_update(Matrix<Scalar>& value, const Matrix<Scalar>& grad, Matrix<Scalar>& m, Matrix<Scalar>& v, std::int64_t t,
                 const AdamHyper& h) {
  const auto b1 = static_cast<Scalar>(h.beta1);
  const auto b2 = static_cast<Scalar>(h.beta2);
  m = b1 * m + (Scalar(1) - b1) * grad;
  v = b2 * v + (Scalar(1) - b2) * grad.cwiseAbs2();
  const auto c1 = static_cast<Scalar>(1.0 - std::pow(h.beta1, double(t)));
  const auto c2 = static_cast<Scalar>(1.0 - std::pow(h.beta2, double(t)));
  const auto lr = static_cast<Scalar>(h.learning_rate);
  const auto eps = static_cast<Scalar>(h.eps);
  value.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
}

/// Adam over named parameter/gradient maps. Throws Error when a parameter
/// has no gradient entry.
template <typename Scalar>
void adam_step(std::map<std::string, Matrix<Scalar>>& params, const std::map<std::string, Matrix<Scalar>>& grads,
               AdamState<Scalar>& state, const AdamHyper& h) {
  for (const auto& [name, p] : params)
    if (!grads.count(name)) throw Error("adam_step: missing gradient for '" + name + "'");
  ++state.step;
  for (auto& [name, p] : params) {
    const auto& g = grads.at(name);
    if (g.rows() != p.rows() || g.cols() != p.cols()) throw ShapeError("adam_step: gradient shape mismatch for '" + name + "'");
    auto& m = state.m.try_emplace(name, Matrix<Scalar>::Zero(p.rows(), p.cols())).first->second;
    auto& v = state.v.try_emplace(name, Matrix<Scalar>::Zero(p.rows(), p.cols())).first->second;
    adam_update(p, g, m, v, state.step, h);
  }
}

/// Adam over a module's parameters, using their accumulated gradients.
template <typename Module, typename Scalar>
void adam_step(Module& model, AdamState<Scalar>& state, const AdamHyper& h) {
  ++state.step;
  model.visit("", [&](const std::string& name, Param<Scalar>& p) {
    auto& m = state.m.try_emplace(name, Matrix<Scalar>::Zero(p.value.rows(), p.value.cols())).first->second;
    auto& v = state.v.try_emplace(name, Matrix<Scalar>::Zero(p.value.rows(), p.value.cols())).first->second;
    adam_update(p.value, p.grad, m, v, state.step, h);
  });
}

// ---------------------------------------------------------------------------
// Fit

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double seconds = 0.0;
};

struct RunRecord {
  std::vector<EpochRecord> epochs;
  int best_epoch = -1;
  double best_val_loss = std::numeric_limits<double>::infinity();
  metrics::MetricReport test;
  bool has_test = false;

  [[nodiscard]] std::string to_json() const;
};

using NamedTensors = std::vector<std::pair<std::string, Matrix<float>>>;

/// Everything a resumed run needs besides the model weights.
struct TrainerState {
  AdamState<float> adam;
  int next_epoch = 0;
  RunRecord record;
  NamedTensors best_params;  // weights of record.best_epoch
};

class NonFiniteLoss : public Error {
 public:
  NonFiniteLoss(int epoch, int batch, double loss);
  int epoch;
  int batch;
  double loss;
};

NamedTensors snapshot(Network<float>& model);
void restore(Network<float>& model, const NamedTensors& params);

/// Mean per-sample MSE of the clamped prediction.
double dataset_loss(Network<float>& model, const std::vector<Example>& data);

/// Called after every epoch with the model at its latest (not best) weights.
using EpochCallback = std::function<void(const TrainerState&, Network<float>&)>;

/// Trains from state.next_epoch up to cfg.epochs, then loads the weights of
/// the epoch with the lowest validation loss (earliest on ties) into model.
/// Validation falls back to the training set when `val` is empty.
RunRecord fit(Network<float>& model, const std::vector<Example>& train, const std::vector<Example>& val,
              const TrainConfig& cfg, TrainerState& state, const EpochCallback& on_epoch = {});

RunRecord fit(Network<float>& model, const std::vector<Example>& train, const std::vector<Example>& val,
              const TrainConfig& cfg);

// ---------------------------------------------------------------------------
// Evaluation

/// NMSE is the mean of per-sample NMSE, RMSE is sqrt of the mean MSE; SSIM
/// and PSNR are per-sample means.
metrics::MetricReport evaluate(Network<float>& model, const std::vector<Example>& data);

/// Evaluation of a model on a dataset it was not trained on; no weight update.
/// Throws ShapeError when the rasters do not fit the model's pyramid.
metrics::MetricReport zero_shot(Network<float>& model, const std::vector<Example>& data);

/// Scores any per-sample predictor with evaluate()'s aggregation.
metrics::MetricReport evaluate_predictions(const std::vector<Matrix<float>>& pred, const std::vector<Example>& data);

/// Per-pixel mean of the training targets.
Matrix<float> mean_predictor(const std::vector<Example>& train);

}  // namespace lpcgmn::train
