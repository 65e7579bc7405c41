#pragma once

#include <functional>
#include <vector>

#include "fscp/core.hpp"

namespace fscp {

// One calibration task's predicted quantile together with the empirical
// distribution of its test nonconformity scores.
struct CalibrationRecord {
  double q_hat = 0.0;
  ScoreSample test_scores;
};

struct Correction {
  enum class Mode { kEmpiricalF, kExactF };
  double lambda = 0.0;  // may be negative for conservative predictors
  double beta = 0.0;
  Mode mode = Mode::kEmpiricalF;
};

struct EpsilonAdjustment {
  double epsilon_prime = 0.0;
  double alpha = 0.0;  // grid point that minimized the correction
};

// Fraction of scores <= v.
double ecdf_eval(const ScoreSample& scores, double v);

// Smallest lambda with (1/(l+1)) * sum_i F_i(q_hat_i + lambda) >= beta,
// where F_i is the empirical CDF of record i. The left side is a
// right-continuous step function jumping only at {s - q_hat_i}, so the
// search runs exactly over that breakpoint set. Throws InfeasibleError when
// beta > l/(l+1).
Correction lambda_correction(double beta,
                             const std::vector<CalibrationRecord>& records);

// Exact-F variant taking analytic CDF callbacks; solved by bisection.
Correction lambda_correction_exact(
    double beta, const std::vector<double>& q_hats,
    const std::vector<std::function<double(double)>>& cdfs);

// Keep every candidate whose score is <= q_hat + lambda.
PredictionSet meta_cp_classify(const std::vector<int>& candidates,
                               const LabelScorer& scorer, double q_hat_target,
                               const Correction& correction);

// [point - t, point + t] with t = q_hat + lambda; negative t flags an empty
// interval, t = 0 a degenerate single point.
PredictionSet meta_cp_interval(double point_prediction, double q_hat_target,
                               const Correction& correction);

// Adjusted significance for (delta, epsilon) sample-conditional validity:
// epsilon minus the smallest DKW/Hoeffding correction over a 200-point
// log-spaced grid of the free parameter alpha. Throws InfeasibleError when
// no grid point is feasible or the adjusted value is <= 0.
EpsilonAdjustment epsilon_adjust(double epsilon, double delta,
                                 const std::vector<int>& m_list);

}  // namespace fscp
