#include "fscp/calibration.hpp"

#include <algorithm>
#include <cmath>

namespace fscp {

double ecdf_eval(const ScoreSample& scores, double v) {
  std::size_t count = 0;
  for (double s : scores.values()) {
    if (s <= v) ++count;
  }
  return static_cast<double>(count) / static_cast<double>(scores.size());
}

Correction lambda_correction(double beta,
                             const std::vector<CalibrationRecord>& records) {
  if (records.empty()) throw ArgumentError("no calibration records");
  if (!(beta > 0.0) || !(beta < 1.0)) throw ArgumentError("beta must lie in (0, 1)");
  double l = static_cast<double>(records.size());
  if (beta > l / (l + 1.0) + 1e-12) {
    throw InfeasibleError(
        "beta exceeds l/(l+1); more calibration tasks required");
  }
  // Pool the breakpoints s - q_hat_i, each weighted by its task's ECDF step.
  std::vector<std::pair<double, double>> steps;
  for (const CalibrationRecord& rec : records) {
    double w = 1.0 / (static_cast<double>(rec.test_scores.size()) * (l + 1.0));
    for (double s : rec.test_scores.values()) {
      steps.emplace_back(s - rec.q_hat, w);
    }
  }
  std::sort(steps.begin(), steps.end());
  double mass = 0.0;
  for (const auto& [lambda, w] : steps) {
    mass += w;
    if (mass >= beta - 1e-12) {
      Correction c;
      c.lambda = lambda;
      c.beta = beta;
      c.mode = Correction::Mode::kEmpiricalF;
      return c;
    }
  }
  throw InfeasibleError("beta unreachable from calibration records");
}

Correction lambda_correction_exact(
    double beta, const std::vector<double>& q_hats,
    const std::vector<std::function<double(double)>>& cdfs) {
  if (q_hats.empty() || q_hats.size() != cdfs.size()) {
    throw ArgumentError("mismatched q_hat/cdf lists");
  }
  if (!(beta > 0.0) || !(beta < 1.0)) throw ArgumentError("beta must lie in (0, 1)");
  double l = static_cast<double>(q_hats.size());
  if (beta > l / (l + 1.0) + 1e-12) {
    throw InfeasibleError(
        "beta exceeds l/(l+1); more calibration tasks required");
  }
  auto objective = [&](double lambda) {
    double total = 0.0;
    for (std::size_t i = 0; i < q_hats.size(); ++i) {
      total += cdfs[i](q_hats[i] + lambda);
    }
    return total / (l + 1.0);
  };
  double lo = -1.0, hi = 1.0;
  while (objective(hi) < beta) {
    hi *= 2.0;
    if (hi > 1e12) throw InfeasibleError("beta unreachable from exact CDFs");
  }
  while (objective(lo) >= beta) {
    lo *= 2.0;
    if (lo < -1e12) break;
  }
  for (int iter = 0; iter < 200; ++iter) {
    double mid = 0.5 * (lo + hi);
    if (objective(mid) >= beta) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  Correction c;
  c.lambda = hi;
  c.beta = beta;
  c.mode = Correction::Mode::kExactF;
  return c;
}

PredictionSet meta_cp_classify(const std::vector<int>& candidates,
                               const LabelScorer& scorer, double q_hat_target,
                               const Correction& correction) {
  if (candidates.empty()) throw ArgumentError("candidate list is empty");
  double threshold = q_hat_target + correction.lambda;
  PredictionSet set;
  set.kind = PredictionSet::Kind::kLabels;
  set.level = correction.beta;
  for (int y : candidates) {
    if (scorer(y) <= threshold) set.labels.push_back(y);
  }
  std::sort(set.labels.begin(), set.labels.end());
  return set;
}

PredictionSet meta_cp_interval(double point_prediction, double q_hat_target,
                               const Correction& correction) {
  double t = q_hat_target + correction.lambda;
  PredictionSet set;
  set.kind = PredictionSet::Kind::kInterval;
  set.level = correction.beta;
  if (t < 0.0) {
    set.empty_interval = true;
    set.lo = point_prediction;
    set.hi = point_prediction;
  } else if (t == kInfinity) {
    set.unbounded = true;
    set.lo = -kInfinity;
    set.hi = kInfinity;
  } else {
    set.lo = point_prediction - t;
    set.hi = point_prediction + t;
  }
  return set;
}

EpsilonAdjustment epsilon_adjust(double epsilon, double delta,
                                 const std::vector<int>& m_list) {
  if (!(epsilon > 0.0) || !(epsilon < 1.0)) throw ArgumentError("epsilon must lie in (0, 1)");
  if (!(delta > 0.0) || !(delta < 1.0)) throw ArgumentError("delta must lie in (0, 1)");
  if (m_list.empty()) throw ArgumentError("no calibration sample counts");
  for (int m : m_list) {
    if (m < 1) throw ArgumentError("sample counts must be >= 1");
  }
  double l = static_cast<double>(m_list.size());
  double alpha_max = 1.0 - std::pow(1.0 - delta, 1.0 / l);

  constexpr int kGridPoints = 200;
  double best_tau = kInfinity;
  double best_alpha = 0.0;
  for (int j = 0; j < kGridPoints; ++j) {
    // log-spaced over (alpha_max * 1e-8, alpha_max), endpoint excluded
    double frac = static_cast<double>(j + 1) / (kGridPoints + 1);
    double alpha = alpha_max * std::pow(1e-8, 1.0 - frac);
    double log_arg = 1.0 - (1.0 - delta) / std::pow(1.0 - alpha, l);
    if (!(log_arg > 0.0) || !(log_arg < 1.0)) continue;
    double gamma_sq_sum = 0.0;
    for (int m : m_list) {
      gamma_sq_sum += std::log(2.0 / alpha) / (2.0 * static_cast<double>(m));
    }
    double tau =
        std::sqrt((-2.0 / (l * l)) * gamma_sq_sum * std::log(log_arg));
    if (tau < best_tau) {
      best_tau = tau;
      best_alpha = alpha;
    }
  }
  if (!std::isfinite(best_tau)) {
    throw InfeasibleError("no feasible alpha for (delta, epsilon) adjustment");
  }
  double eps_prime = epsilon - best_tau;
  if (eps_prime <= 0.0) {
    throw InfeasibleError(
        "insufficient calibration data for the requested (delta, epsilon)");
  }
  return EpsilonAdjustment{eps_prime, best_alpha};
}

}  // namespace fscp
