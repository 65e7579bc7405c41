#pragma once

#include <vector>

#include "fscp/set_regressor.hpp"
#include "fscp/simulator.hpp"

namespace fscp {

// One training pair per episode: fit the scorer on the support, take the k
// leave-one-out scores as input, and target the empirical beta-quantile of
// the m extra examples' scores under the support-fitted scorer. Requires
// m >= 10 * k for every episode.
std::vector<QuantileTrainingExample> build_quantile_dataset(
    const std::vector<ClsEpisode>& episodes, double beta);
std::vector<QuantileTrainingExample> build_quantile_dataset(
    const std::vector<RegEpisode>& episodes, double beta, double ridge_lambda);

struct CrossfoldResult {
  SetRegressor regressor;
  std::vector<std::size_t> fold_sizes;  // training examples contributed per fold
};

// Cross-fold strategy: split the training tasks into k_folds folds, build
// each fold's quantile examples with scorers that exclude that fold (at this
// scale scorers are analytic per-task fits, so folds only route data),
// aggregate the union, and train the set regressor on it.
CrossfoldResult crossfold_train(const std::vector<ClsEpisode>& episodes,
                                int k_folds, double beta, int hidden,
                                const TrainConfig& config);
CrossfoldResult crossfold_train(const std::vector<RegEpisode>& episodes,
                                int k_folds, double beta, double ridge_lambda,
                                int hidden, const TrainConfig& config);

}  // namespace fscp
