#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "fscp/models.hpp"
#include "fscp/rng.hpp"

namespace fscp {

enum class Domain { kClassification, kRegression };

// Synthetic task-distribution parameters. Classification tasks draw n_ways
// class means iid N(0, class_separation^2 I) with unit-variance noise around
// each mean; regression tasks draw w* ~ N(0, weight_scale^2 I) with
// y = <w*, x> + N(0, noise_scale^2) and x ~ N(0, I).
struct TaskDistributionConfig {
  Domain kind = Domain::kClassification;
  int n_ways = 10;
  int feature_dim = 8;
  double class_separation = 3.0;
  double noise_scale = 1.0;
  double regression_weight_scale = 1.0;
  int k_support = 16;  // per class when balanced_support, else total
  bool balanced_support = true;
  int m_extra = 500;
  int q_query = 1;
  std::uint64_t master_seed = 0;

  void validate() const;
};

// One classification task's sampled data.
struct ClsEpisode {
  std::vector<Example> support;
  std::vector<Example> query;
  std::vector<Example> extra;
  std::uint64_t task_id = 0;
  std::uint64_t seed = 0;
};

struct RegEpisode {
  std::vector<RegExample> support;
  std::vector<RegExample> query;
  std::vector<RegExample> extra;
  std::uint64_t task_id = 0;
  std::uint64_t seed = 0;
};

// A realized classification task: fixed class means, example draws on demand.
class ClassificationTask {
 public:
  ClassificationTask(const TaskDistributionConfig& config,
                     std::uint64_t task_seed);

  Example sample(Rng& rng) const;
  Example sample_with_label(Rng& rng, int label) const;
  // Disjoint support/query/extra draws; support is balanced (k per class)
  // when the config says so.
  ClsEpisode sample_episode(int k, int q, int m, std::uint64_t episode_seed) const;

  int n_ways() const { return n_ways_; }
  const Eigen::MatrixXd& class_means() const { return means_; }
  std::uint64_t task_id() const { return task_seed_; }

 private:
  Eigen::MatrixXd means_;  // n_ways x d
  int n_ways_ = 0;
  bool balanced_support_ = true;
  std::uint64_t master_seed_ = 0;
  std::uint64_t task_seed_ = 0;
};

class RegressionTask {
 public:
  RegressionTask(const TaskDistributionConfig& config, std::uint64_t task_seed);

  RegExample sample(Rng& rng) const;
  RegEpisode sample_episode(int k, int q, int m, std::uint64_t episode_seed) const;

  const Eigen::VectorXd& true_weights() const { return weights_; }
  double noise_scale() const { return noise_; }

 private:
  Eigen::VectorXd weights_;
  double noise_ = 1.0;
  std::uint64_t master_seed_ = 0;
  std::uint64_t task_seed_ = 0;
};

// Line-delimited fixture format, one example per line:
//   task_id,split,label,feature0,feature1,...
// with split in {support, query, extra}.
void export_episode(std::ostream& out, const ClsEpisode& episode);
void export_episode(std::ostream& out, const RegEpisode& episode);

}  // namespace fscp
