#include "fscp/simulator.hpp"

#include <ostream>

#include "fscp/errors.hpp"

namespace fscp {

namespace {

// Stream tags keeping task construction, episode draws, and splits apart.
constexpr std::uint64_t kTagTask = 0x7461736bull;     // "task"
constexpr std::uint64_t kTagEpisode = 0x65706973ull;  // "epis"

Eigen::VectorXd gaussian_vector(Rng& rng, int dim, double scale) {
  Eigen::VectorXd v(dim);
  for (int i = 0; i < dim; ++i) v[i] = scale * rng.normal();
  return v;
}

}  // namespace

void TaskDistributionConfig::validate() const {
  if (n_ways < 2 && kind == Domain::kClassification) {
    throw ConfigError("classification needs n_ways >= 2");
  }
  if (feature_dim < 1) throw ConfigError("feature_dim must be >= 1");
  if (k_support < 1 || m_extra < 1 || q_query < 1) {
    throw ConfigError("support/query/extra counts must be >= 1");
  }
  if (class_separation < 0.0 || noise_scale <= 0.0 ||
      regression_weight_scale <= 0.0) {
    throw ConfigError("scales must be positive");
  }
}

ClassificationTask::ClassificationTask(const TaskDistributionConfig& config,
                                       std::uint64_t task_seed)
    : n_ways_(config.n_ways),
      balanced_support_(config.balanced_support),
      master_seed_(config.master_seed),
      task_seed_(task_seed) {
  config.validate();
  Rng rng = Rng::stream(config.master_seed, kTagTask, task_seed);
  means_.resize(config.n_ways, config.feature_dim);
  for (int c = 0; c < config.n_ways; ++c) {
    means_.row(c) =
        gaussian_vector(rng, config.feature_dim, config.class_separation);
  }
}

Example ClassificationTask::sample(Rng& rng) const {
  int label = static_cast<int>(rng.below(static_cast<std::uint64_t>(n_ways_)));
  return sample_with_label(rng, label);
}

Example ClassificationTask::sample_with_label(Rng& rng, int label) const {
  Example ex;
  ex.label = label;
  ex.x = means_.row(label).transpose() +
         gaussian_vector(rng, static_cast<int>(means_.cols()), 1.0);
  return ex;
}

ClsEpisode ClassificationTask::sample_episode(int k, int q, int m,
                                              std::uint64_t episode_seed) const {
  if (k < 1 || q < 1 || m < 1) throw ArgumentError("episode counts must be >= 1");
  Rng rng = Rng::stream(master_seed_, kTagEpisode, task_seed_, episode_seed);
  ClsEpisode ep;
  ep.task_id = task_seed_;
  ep.seed = episode_seed;
  if (balanced_support_) {
    for (int c = 0; c < n_ways_; ++c) {
      for (int i = 0; i < k; ++i) ep.support.push_back(sample_with_label(rng, c));
    }
  } else {
    for (int i = 0; i < k; ++i) ep.support.push_back(sample(rng));
  }
  for (int i = 0; i < q; ++i) ep.query.push_back(sample(rng));
  for (int i = 0; i < m; ++i) ep.extra.push_back(sample(rng));
  return ep;
}

RegressionTask::RegressionTask(const TaskDistributionConfig& config,
                               std::uint64_t task_seed)
    : noise_(config.noise_scale),
      master_seed_(config.master_seed),
      task_seed_(task_seed) {
  config.validate();
  Rng rng = Rng::stream(config.master_seed, kTagTask, task_seed);
  weights_ =
      gaussian_vector(rng, config.feature_dim, config.regression_weight_scale);
}

RegExample RegressionTask::sample(Rng& rng) const {
  RegExample ex;
  ex.x = gaussian_vector(rng, static_cast<int>(weights_.size()), 1.0);
  ex.y = weights_.dot(ex.x) + noise_ * rng.normal();
  return ex;
}

RegEpisode RegressionTask::sample_episode(int k, int q, int m,
                                          std::uint64_t episode_seed) const {
  if (k < 1 || q < 1 || m < 1) throw ArgumentError("episode counts must be >= 1");
  Rng rng = Rng::stream(master_seed_, kTagEpisode, task_seed_, episode_seed);
  RegEpisode ep;
  ep.task_id = task_seed_;
  ep.seed = episode_seed;
  for (int i = 0; i < k; ++i) ep.support.push_back(sample(rng));
  for (int i = 0; i < q; ++i) ep.query.push_back(sample(rng));
  for (int i = 0; i < m; ++i) ep.extra.push_back(sample(rng));
  return ep;
}

namespace {

template <class Ex>
void write_lines(std::ostream& out, std::uint64_t task_id, const char* split,
                 const std::vector<Ex>& examples) {
  for (const Ex& ex : examples) {
    out << task_id << ',' << split << ',';
    if constexpr (std::is_same_v<Ex, Example>) {
      out << ex.label;
    } else {
      out << ex.y;
    }
    for (Eigen::Index i = 0; i < ex.x.size(); ++i) out << ',' << ex.x[i];
    out << '\n';
  }
}

}  // namespace

void export_episode(std::ostream& out, const ClsEpisode& episode) {
  write_lines(out, episode.task_id, "support", episode.support);
  write_lines(out, episode.task_id, "query", episode.query);
  write_lines(out, episode.task_id, "extra", episode.extra);
}

void export_episode(std::ostream& out, const RegEpisode& episode) {
  write_lines(out, episode.task_id, "support", episode.support);
  write_lines(out, episode.task_id, "query", episode.query);
  write_lines(out, episode.task_id, "extra", episode.extra);
}

}  // namespace fscp
