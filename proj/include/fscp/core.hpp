#pragma once

#include <functional>
#include <limits>
#include <map>
#include <vector>

#include "fscp/errors.hpp"

namespace fscp {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

// A non-empty batch of nonconformity scores. Entries may be +infinity but
// never NaN; both are checked at construction.
class ScoreSample {
 public:
  explicit ScoreSample(std::vector<double> values);

  const std::vector<double>& values() const { return values_; }
  std::size_t size() const { return values_.size(); }

 private:
  std::vector<double> values_;
};

// A discrete label set or a closed interval, together with its target
// coverage level 1 - epsilon. Discrete sets may be empty; intervals may be
// empty (threshold below zero) or unbounded (threshold +infinity).
struct PredictionSet {
  enum class Kind { kLabels, kInterval };

  Kind kind = Kind::kLabels;
  std::vector<int> labels;  // sorted ascending
  double lo = 0.0;
  double hi = 0.0;
  bool empty_interval = false;
  bool unbounded = false;
  double level = 0.0;  // 1 - epsilon

  bool contains_label(int y) const;
  bool contains_value(double y) const;
  // Label count for discrete sets, width for intervals.
  double size() const;
};

// Score of a candidate label for a fixed query point.
using LabelScorer = std::function<double(int label)>;

// Full-CP rescoring result for one candidate: the augmented test score and
// the scores of the support points under the augmented fit.
struct AugmentedScores {
  double test_score = 0.0;
  std::vector<double> support_scores;
};

// Scores recorded per Mondrian class bucket; classes with no calibration
// data get an unconditional (+infinity) threshold and are reported here.
struct MondrianDiagnostics {
  std::vector<int> empty_classes;
};

// The smallest v in the sample whose empirical CDF reaches beta, i.e. the
// ceil(beta * n)-th smallest of n values. Throws ArgumentError for beta
// outside (0, 1).
double quantile(double beta, const ScoreSample& sample);

// quantile(beta, sample + {+infinity}); +infinity iff ceil(beta*(n+1)) > n.
double inflated_quantile(double beta, const ScoreSample& sample);

// Split CP: keep every candidate whose score is <= the inflated
// (1 - epsilon)-quantile of the held-out calibration scores.
PredictionSet split_cp_classify(const std::vector<int>& candidates,
                                const LabelScorer& scorer,
                                const ScoreSample& calib_scores,
                                double epsilon);

// Split CP for regression with absolute-error scores: the closed-form
// interval [prediction - t, prediction + t].
PredictionSet split_cp_interval(double point_prediction,
                                const ScoreSample& calib_abs_residuals,
                                double epsilon);

// Full CP: for each candidate, `rescore` refits on support + candidate and
// returns the augmented scores; the candidate is kept iff its test score is
// <= the inflated quantile of the augmented support scores.
PredictionSet full_cp_classify(
    const std::vector<int>& candidates,
    const std::function<AugmentedScores(int)>& rescore, double epsilon);

// Class-conditional (Mondrian) split CP: per-candidate thresholds from the
// calibration scores of that class only.
PredictionSet mondrian_classify(
    const std::vector<int>& candidates, const LabelScorer& scorer,
    const std::map<int, ScoreSample>& per_class_calib, double epsilon,
    MondrianDiagnostics* diagnostics = nullptr);

}  // namespace fscp
