#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fscp/errors.hpp"

namespace fscp {

// One training pair for the quantile predictor: a task's k leave-one-out
// scores and the empirical beta-quantile of that task's test scores.
struct QuantileTrainingExample {
  std::vector<double> loo_scores;
  double target = 0.0;
};

struct TrainConfig {
  int epochs = 400;
  double step_size = 1e-3;
  int batch = 32;
  std::uint64_t seed = 0;
  bool adam = false;       // plain clipped gradient descent by default
  double clip_norm = 10.0;
};

struct TrainResult {
  std::vector<double> epoch_mse;  // training MSE after each epoch
};

// Permutation-invariant quantile regressor (deep-sets form): a 2-layer
// elementwise encoder, an exact sum aggregation, and a 2-layer decoder,
// all with ReLU activations.
class SetRegressor {
 public:
  static SetRegressor init(int hidden, double beta, std::uint64_t seed);

  double predict(std::span<const double> loo_scores) const;

  // Mini-batch squared-error training against the per-task quantile targets.
  // Deterministic given the config seed. Throws TrainingError on divergence.
  TrainResult train(const std::vector<QuantileTrainingExample>& dataset,
                    const TrainConfig& config);

  // Mean squared prediction error over a dataset.
  double mse(const std::vector<QuantileTrainingExample>& dataset) const;

  int hidden() const { return hidden_; }
  double beta() const { return beta_; }

  // By default the input arity is pinned to the training k; enabling
  // variable k sums over however many scores are given.
  int expected_k() const { return expected_k_; }
  void set_allow_variable_k(bool allow) { allow_variable_k_ = allow; }

  // Flat text format: one "name rows cols" header per tensor followed by
  // row-major values.
  void save(const std::string& path) const;
  static SetRegressor load(const std::string& path);

  // Parameter access for gradient checks.
  std::vector<double*> parameter_views();
  std::vector<const double*> parameter_views() const;
  std::size_t parameter_count() const;

  // Loss and full parameter gradient on a dataset (no update applied).
  double loss_and_gradient(
      const std::vector<QuantileTrainingExample>& dataset,
      std::vector<double>* gradient) const;

 private:
  SetRegressor() = default;

  struct Layer {
    std::vector<double> w;  // out x in, row-major
    std::vector<double> b;  // out
    int in = 0;
    int out = 0;
  };

  double forward(std::span<const double> scores,
                 std::vector<double>* cache) const;

  int hidden_ = 0;
  double beta_ = 0.0;
  int expected_k_ = 0;  // 0 = not yet pinned
  bool allow_variable_k_ = false;
  Layer enc1_, enc2_, dec1_, dec2_;

  friend struct SetRegressorAccess;
};

// Per-task dataset assembly is in harness.hpp (it needs the simulator);
// this module only defines the model and its training loop.

}  // namespace fscp
