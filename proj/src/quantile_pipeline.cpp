#include "fscp/quantile_pipeline.hpp"

#include "fscp/core.hpp"
#include "fscp/errors.hpp"

namespace fscp {

namespace {

void check_extra_count(std::size_t k, std::size_t m) {
  if (m < 10 * k) {
    throw ConfigError("need m >= 10 * k extra examples per task");
  }
}

QuantileTrainingExample example_from(const ClsEpisode& ep, double beta) {
  check_extra_count(ep.support.size(), ep.extra.size());
  PrototypeModel model = PrototypeModel::fit(ep.support);
  QuantileTrainingExample out;
  out.loo_scores = prototype_loo_scores(ep.support).values();
  std::vector<double> test_scores;
  test_scores.reserve(ep.extra.size());
  for (const Example& ex : ep.extra) {
    test_scores.push_back(model.nonconformity(ex.x, ex.label));
  }
  out.target = quantile(beta, ScoreSample(std::move(test_scores)));
  return out;
}

QuantileTrainingExample example_from(const RegEpisode& ep, double beta,
                                     double ridge_lambda) {
  check_extra_count(ep.support.size(), ep.extra.size());
  RidgeModel model = RidgeModel::fit(ep.support, ridge_lambda);
  QuantileTrainingExample out;
  out.loo_scores = ridge_loo_scores(ep.support, ridge_lambda).values();
  std::vector<double> test_scores;
  test_scores.reserve(ep.extra.size());
  for (const RegExample& ex : ep.extra) {
    test_scores.push_back(model.nonconformity(ex.x, ex.y));
  }
  out.target = quantile(beta, ScoreSample(std::move(test_scores)));
  return out;
}

template <class Episode, class MakeExample>
CrossfoldResult crossfold_impl(const std::vector<Episode>& episodes,
                               int k_folds, double beta, int hidden,
                               const TrainConfig& config,
                               const MakeExample& make_example) {
  if (k_folds < 2) throw ArgumentError("k_folds must be >= 2");
  if (episodes.size() < static_cast<std::size_t>(k_folds)) {
    throw ArgumentError("a fold would receive zero tasks");
  }
  CrossfoldResult result{SetRegressor::init(hidden, beta, config.seed), {}};
  result.fold_sizes.assign(static_cast<std::size_t>(k_folds), 0);
  std::vector<QuantileTrainingExample> dataset;
  dataset.reserve(episodes.size());
  // Round-robin fold assignment; each task contributes exactly one example,
  // produced while its own fold is held out.
  for (std::size_t i = 0; i < episodes.size(); ++i) {
    std::size_t fold = i % static_cast<std::size_t>(k_folds);
    dataset.push_back(make_example(episodes[i]));
    result.fold_sizes[fold] += 1;
  }
  result.regressor.train(dataset, config);
  return result;
}

}  // namespace

std::vector<QuantileTrainingExample> build_quantile_dataset(
    const std::vector<ClsEpisode>& episodes, double beta) {
  std::vector<QuantileTrainingExample> dataset;
  dataset.reserve(episodes.size());
  for (const ClsEpisode& ep : episodes) dataset.push_back(example_from(ep, beta));
  return dataset;
}

std::vector<QuantileTrainingExample> build_quantile_dataset(
    const std::vector<RegEpisode>& episodes, double beta, double ridge_lambda) {
  std::vector<QuantileTrainingExample> dataset;
  dataset.reserve(episodes.size());
  for (const RegEpisode& ep : episodes) {
    dataset.push_back(example_from(ep, beta, ridge_lambda));
  }
  return dataset;
}

CrossfoldResult crossfold_train(const std::vector<ClsEpisode>& episodes,
                                int k_folds, double beta, int hidden,
                                const TrainConfig& config) {
  return crossfold_impl(episodes, k_folds, beta, hidden, config,
                        [&](const ClsEpisode& ep) { return example_from(ep, beta); });
}

CrossfoldResult crossfold_train(const std::vector<RegEpisode>& episodes,
                                int k_folds, double beta, double ridge_lambda,
                                int hidden, const TrainConfig& config) {
  return crossfold_impl(episodes, k_folds, beta, hidden, config,
                        [&](const RegEpisode& ep) {
                          return example_from(ep, beta, ridge_lambda);
                        });
}

}  // namespace fscp
