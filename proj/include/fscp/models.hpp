#pragma once

#include <Eigen/Dense>
#include <vector>

#include "fscp/core.hpp"
#include "fscp/errors.hpp"

namespace fscp {

// A labeled classification example over fixed-dimension features.
struct Example {
  Eigen::VectorXd x;
  int label = 0;
};

// A labeled regression example.
struct RegExample {
  Eigen::VectorXd x;
  double y = 0.0;
};

// Nearest-prototype classifier: one mean vector per class, class likelihoods
// from a softmax over negative euclidean distances.
class PrototypeModel {
 public:
  // Prototype j = mean of support vectors with label j. Labels are those
  // present in the support; any label in `declared_labels` without a support
  // example is a fit error.
  static PrototypeModel fit(const std::vector<Example>& support,
                            const std::vector<int>& declared_labels = {});

  const std::vector<int>& labels() const { return labels_; }
  const Eigen::VectorXd& prototype(int label) const;

  // p(j) proportional to exp(-||c_j - x||), in labels() order.
  std::vector<double> probs(const Eigen::VectorXd& x) const;

  // -p(candidate | x); lower = more conforming.
  double nonconformity(const Eigen::VectorXd& x, int candidate_label) const;

 private:
  std::vector<int> labels_;
  std::vector<Eigen::VectorXd> prototypes_;
};

// Closed-form ridge regressor, solved in the dual (k x k) form
// w = X^T (X X^T + lambda I)^-1 Y.
class RidgeModel {
 public:
  static RidgeModel fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& Y,
                        double lambda);
  static RidgeModel fit(const std::vector<RegExample>& support, double lambda);

  const Eigen::VectorXd& weights() const { return weights_; }
  double predict(const Eigen::VectorXd& x) const { return weights_.dot(x); }

  // |candidate_y - <w, x>|.
  double nonconformity(const Eigen::VectorXd& x, double candidate_y) const {
    return std::abs(candidate_y - predict(x));
  }

 private:
  Eigen::VectorXd weights_;
};

// Score each support example under the model refit on the other k-1.
// Requires k >= 2; prototype variant also requires every class to survive
// each holdout (i.e. >= 2 examples per class).
ScoreSample prototype_loo_scores(const std::vector<Example>& support);
ScoreSample ridge_loo_scores(const std::vector<RegExample>& support,
                             double lambda);

// Fixed seeded random linear map d_in -> d_out, standing in for a learned
// encoder. Entries are iid N(0, 1/d_out).
Eigen::MatrixXd random_projection(int d_in, int d_out, std::uint64_t seed);

}  // namespace fscp
