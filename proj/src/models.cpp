#include "fscp/models.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "fscp/rng.hpp"

namespace fscp {

PrototypeModel PrototypeModel::fit(const std::vector<Example>& support,
                                   const std::vector<int>& declared_labels) {
  if (support.empty()) throw ArgumentError("empty support set");
  std::map<int, std::pair<Eigen::VectorXd, int>> sums;
  for (const Example& ex : support) {
    auto it = sums.find(ex.label);
    if (it == sums.end()) {
      sums.emplace(ex.label, std::make_pair(ex.x, 1));
    } else {
      it->second.first += ex.x;
      it->second.second += 1;
    }
  }
  for (int label : declared_labels) {
    if (!sums.count(label)) {
      throw ArgumentError("declared label has no support examples");
    }
  }
  if (sums.size() < 2) {
    throw ArgumentError("prototype model needs at least 2 classes");
  }
  PrototypeModel model;
  for (auto& [label, sum] : sums) {
    model.labels_.push_back(label);
    model.prototypes_.push_back(sum.first / static_cast<double>(sum.second));
  }
  return model;
}

const Eigen::VectorXd& PrototypeModel::prototype(int label) const {
  auto it = std::lower_bound(labels_.begin(), labels_.end(), label);
  if (it == labels_.end() || *it != label) {
    throw ArgumentError("unknown label");
  }
  return prototypes_[static_cast<std::size_t>(it - labels_.begin())];
}

std::vector<double> PrototypeModel::probs(const Eigen::VectorXd& x) const {
  std::vector<double> logits(labels_.size());
  double max_logit = -kInfinity;
  for (std::size_t j = 0; j < labels_.size(); ++j) {
    logits[j] = -(prototypes_[j] - x).norm();
    max_logit = std::max(max_logit, logits[j]);
  }
  double total = 0.0;
  for (double& v : logits) {
    v = std::exp(v - max_logit);
    total += v;
  }
  for (double& v : logits) v /= total;
  return logits;
}

double PrototypeModel::nonconformity(const Eigen::VectorXd& x,
                                     int candidate_label) const {
  auto it = std::lower_bound(labels_.begin(), labels_.end(), candidate_label);
  if (it == labels_.end() || *it != candidate_label) {
    throw ArgumentError("unknown candidate label");
  }
  return -probs(x)[static_cast<std::size_t>(it - labels_.begin())];
}

RidgeModel RidgeModel::fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& Y,
                           double lambda) {
  if (X.rows() < 1) throw ArgumentError("ridge fit needs k >= 1");
  if (X.rows() != Y.size()) throw ArgumentError("X/Y row mismatch");
  if (lambda < 0.0) throw ArgumentError("lambda must be >= 0");
  Eigen::MatrixXd gram = X * X.transpose();
  gram.diagonal().array() += lambda;
  Eigen::VectorXd alpha = gram.ldlt().solve(Y);
  double residual = (gram * alpha - Y).norm();
  if (!alpha.allFinite() || residual > 1e-6 * std::max(Y.norm(), 1.0)) {
    throw NumericError("singular or ill-conditioned ridge system");
  }
  RidgeModel model;
  model.weights_ = X.transpose() * alpha;
  return model;
}

RidgeModel RidgeModel::fit(const std::vector<RegExample>& support,
                           double lambda) {
  if (support.empty()) throw ArgumentError("ridge fit needs k >= 1");
  auto k = static_cast<Eigen::Index>(support.size());
  Eigen::Index d = support[0].x.size();
  Eigen::MatrixXd X(k, d);
  Eigen::VectorXd Y(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    X.row(i) = support[static_cast<std::size_t>(i)].x;
    Y[i] = support[static_cast<std::size_t>(i)].y;
  }
  return fit(X, Y, lambda);
}

ScoreSample prototype_loo_scores(const std::vector<Example>& support) {
  if (support.size() < 2) throw ArgumentError("leave-one-out needs k >= 2");
  std::vector<double> scores(support.size());
  std::vector<Example> rest(support.size() - 1);
  for (std::size_t j = 0; j < support.size(); ++j) {
    rest.clear();
    for (std::size_t i = 0; i < support.size(); ++i) {
      if (i != j) rest.push_back(support[i]);
    }
    PrototypeModel model = PrototypeModel::fit(rest);
    scores[j] = model.nonconformity(support[j].x, support[j].label);
  }
  return ScoreSample(std::move(scores));
}

ScoreSample ridge_loo_scores(const std::vector<RegExample>& support,
                             double lambda) {
  if (support.size() < 2) throw ArgumentError("leave-one-out needs k >= 2");
  std::vector<double> scores(support.size());
  std::vector<RegExample> rest;
  for (std::size_t j = 0; j < support.size(); ++j) {
    rest.clear();
    for (std::size_t i = 0; i < support.size(); ++i) {
      if (i != j) rest.push_back(support[i]);
    }
    RidgeModel model = RidgeModel::fit(rest, lambda);
    scores[j] = model.nonconformity(support[j].x, support[j].y);
  }
  return ScoreSample(std::move(scores));
}

Eigen::MatrixXd random_projection(int d_in, int d_out, std::uint64_t seed) {
  if (d_in < 1 || d_out < 1) throw ArgumentError("bad projection dimensions");
  Rng rng = Rng::stream(seed, 0x70726f6aull);  // "proj"
  Eigen::MatrixXd P(d_out, d_in);
  double scale = 1.0 / std::sqrt(static_cast<double>(d_out));
  for (Eigen::Index r = 0; r < P.rows(); ++r) {
    for (Eigen::Index c = 0; c < P.cols(); ++c) {
      P(r, c) = scale * rng.normal();
    }
  }
  return P;
}

}  // namespace fscp
