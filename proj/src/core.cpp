#include "fscp/core.hpp"

#include <algorithm>
#include <cmath>

namespace fscp {

namespace {

void check_beta(double beta) {
  if (!(beta > 0.0) || !(beta < 1.0)) {
    throw ArgumentError("beta must lie in (0, 1)");
  }
}

// ceil(beta * n) as an exact rank in [1, n], guarding against cases like
// 0.9 * 10 landing just above 9.0 in floating point.
std::size_t beta_rank(double beta, std::size_t n) {
  double raw = beta * static_cast<double>(n);
  auto r = static_cast<std::size_t>(std::ceil(raw - 1e-9));
  if (r < 1) r = 1;
  if (r > n) r = n;
  return r;
}

double kth_smallest(std::vector<double> v, std::size_t rank) {
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(rank - 1),
                   v.end());
  return v[rank - 1];
}

}  // namespace

ScoreSample::ScoreSample(std::vector<double> values)
    : values_(std::move(values)) {
  if (values_.empty()) throw ArgumentError("ScoreSample must be non-empty");
  for (double v : values_) {
    if (std::isnan(v)) throw ArgumentError("ScoreSample rejects NaN entries");
    if (v == -kInfinity) {
      throw ArgumentError("ScoreSample rejects -infinity entries");
    }
  }
}

bool PredictionSet::contains_label(int y) const {
  return std::binary_search(labels.begin(), labels.end(), y);
}

bool PredictionSet::contains_value(double y) const {
  if (empty_interval) return false;
  if (unbounded) return true;
  return y >= lo && y <= hi;
}

double PredictionSet::size() const {
  if (kind == Kind::kLabels) return static_cast<double>(labels.size());
  if (empty_interval) return 0.0;
  if (unbounded) return kInfinity;
  return hi - lo;
}

double quantile(double beta, const ScoreSample& sample) {
  check_beta(beta);
  return kth_smallest(sample.values(), beta_rank(beta, sample.size()));
}

double inflated_quantile(double beta, const ScoreSample& sample) {
  check_beta(beta);
  std::size_t n = sample.size();
  std::size_t rank = beta_rank(beta, n + 1);
  if (rank > n) return kInfinity;
  return kth_smallest(sample.values(), rank);
}

PredictionSet split_cp_classify(const std::vector<int>& candidates,
                                const LabelScorer& scorer,
                                const ScoreSample& calib_scores,
                                double epsilon) {
  if (candidates.empty()) throw ArgumentError("candidate list is empty");
  double threshold = inflated_quantile(1.0 - epsilon, calib_scores);
  PredictionSet set;
  set.kind = PredictionSet::Kind::kLabels;
  set.level = 1.0 - epsilon;
  for (int y : candidates) {
    if (scorer(y) <= threshold) set.labels.push_back(y);
  }
  std::sort(set.labels.begin(), set.labels.end());
  return set;
}

PredictionSet split_cp_interval(double point_prediction,
                                const ScoreSample& calib_abs_residuals,
                                double epsilon) {
  double t = inflated_quantile(1.0 - epsilon, calib_abs_residuals);
  PredictionSet set;
  set.kind = PredictionSet::Kind::kInterval;
  set.level = 1.0 - epsilon;
  if (t == kInfinity) {
    set.unbounded = true;
    set.lo = -kInfinity;
    set.hi = kInfinity;
  } else {
    set.lo = point_prediction - t;
    set.hi = point_prediction + t;
  }
  return set;
}

PredictionSet full_cp_classify(
    const std::vector<int>& candidates,
    const std::function<AugmentedScores(int)>& rescore, double epsilon) {
  if (candidates.empty()) throw ArgumentError("candidate list is empty");
  PredictionSet set;
  set.kind = PredictionSet::Kind::kLabels;
  set.level = 1.0 - epsilon;
  for (int y : candidates) {
    AugmentedScores scores = rescore(y);
    double threshold =
        inflated_quantile(1.0 - epsilon, ScoreSample(scores.support_scores));
    if (scores.test_score <= threshold) set.labels.push_back(y);
  }
  std::sort(set.labels.begin(), set.labels.end());
  return set;
}

PredictionSet mondrian_classify(
    const std::vector<int>& candidates, const LabelScorer& scorer,
    const std::map<int, ScoreSample>& per_class_calib, double epsilon,
    MondrianDiagnostics* diagnostics) {
  if (candidates.empty()) throw ArgumentError("candidate list is empty");
  PredictionSet set;
  set.kind = PredictionSet::Kind::kLabels;
  set.level = 1.0 - epsilon;
  for (int y : candidates) {
    auto it = per_class_calib.find(y);
    double threshold;
    if (it == per_class_calib.end()) {
      threshold = kInfinity;
      if (diagnostics) diagnostics->empty_classes.push_back(y);
    } else {
      threshold = inflated_quantile(1.0 - epsilon, it->second);
    }
    if (scorer(y) <= threshold) set.labels.push_back(y);
  }
  std::sort(set.labels.begin(), set.labels.end());
  return set;
}

}  // namespace fscp
