#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <vector>

#include "doctest.h"
#include "fscp/models.hpp"
#include "fscp/rng.hpp"

using namespace fscp;

namespace {

Eigen::VectorXd vec2(double a, double b) {
  Eigen::VectorXd v(2);
  v << a, b;
  return v;
}

std::vector<Example> two_class_support() {
  // class 0 prototype (1, 0), class 1 prototype (6, 0)
  return {{vec2(0, 0), 0}, {vec2(2, 0), 0}, {vec2(5, 0), 1}, {vec2(7, 0), 1}};
}

}  // namespace

TEST_CASE("prototypes are class means") {
  PrototypeModel model = PrototypeModel::fit(two_class_support());
  CHECK(model.prototype(0).isApprox(vec2(1, 0)));
  CHECK(model.prototype(1).isApprox(vec2(6, 0)));
  CHECK(model.labels() == std::vector<int>{0, 1});
}

TEST_CASE("probabilities follow the distance softmax exactly") {
  PrototypeModel model = PrototypeModel::fit(two_class_support());
  // query at origin: distances 1 and 6
  double e0 = std::exp(-1.0);
  double e1 = std::exp(-6.0);
  std::vector<double> p = model.probs(vec2(0, 0));
  CHECK(p[0] == doctest::Approx(e0 / (e0 + e1)).epsilon(1e-12));
  CHECK(p[1] == doctest::Approx(e1 / (e0 + e1)).epsilon(1e-12));
  CHECK(p[0] + p[1] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(model.nonconformity(vec2(0, 0), 0) ==
        doctest::Approx(-e0 / (e0 + e1)).epsilon(1e-12));
}

TEST_CASE("probabilities survive large distance offsets") {
  // softmax must be computed stably even when distances are huge
  std::vector<Example> sup = {{vec2(0, 0), 0}, {vec2(2000, 0), 1}};
  PrototypeModel model = PrototypeModel::fit(sup);
  std::vector<double> p = model.probs(vec2(0, 0));
  CHECK(p[0] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(std::isfinite(p[1]));
}

TEST_CASE("prototype probabilities are translation invariant") {
  Rng rng(3);
  std::vector<Example> sup;
  for (int i = 0; i < 12; ++i) {
    sup.push_back({vec2(rng.normal(), rng.normal()), i % 3});
  }
  PrototypeModel a = PrototypeModel::fit(sup);
  Eigen::VectorXd shift = vec2(4.2, -1.7);
  std::vector<Example> moved = sup;
  for (Example& ex : moved) ex.x += shift;
  PrototypeModel b = PrototypeModel::fit(moved);
  Eigen::VectorXd q = vec2(0.3, 0.9);
  std::vector<double> pa = a.probs(q);
  std::vector<double> pb = b.probs(q + shift);
  for (std::size_t j = 0; j < pa.size(); ++j) {
    CHECK(pa[j] == doctest::Approx(pb[j]).epsilon(1e-12));
  }
}

TEST_CASE("prototype fit validation") {
  CHECK_THROWS_AS(PrototypeModel::fit({}), ArgumentError);
  std::vector<Example> one_class = {{vec2(0, 0), 0}, {vec2(1, 0), 0}};
  CHECK_THROWS_AS(PrototypeModel::fit(one_class), ArgumentError);
  CHECK_THROWS_AS(PrototypeModel::fit(two_class_support(), {0, 1, 2}),
                  ArgumentError);
  PrototypeModel model = PrototypeModel::fit(two_class_support());
  CHECK_THROWS_AS(model.nonconformity(vec2(0, 0), 9), ArgumentError);
  CHECK_THROWS_AS(model.prototype(9), ArgumentError);
}

TEST_CASE("dual ridge equals the primal solution") {
  Rng rng(7);
  for (int rep = 0; rep < 20; ++rep) {
    int k = 12, d = 5;
    Eigen::MatrixXd X(k, d);
    Eigen::VectorXd Y(k);
    for (int i = 0; i < k; ++i) {
      for (int j = 0; j < d; ++j) X(i, j) = rng.normal();
      Y[i] = rng.normal();
    }
    double lambda = rng.uniform(0.01, 2.0);
    RidgeModel model = RidgeModel::fit(X, Y, lambda);
    Eigen::MatrixXd primal = X.transpose() * X;
    primal.diagonal().array() += lambda;
    Eigen::VectorXd w = primal.ldlt().solve(X.transpose() * Y);
    CHECK((model.weights() - w).norm() < 1e-8 * std::max(1.0, w.norm()));
  }
}

TEST_CASE("ridge recovers the generating weights without noise") {
  Rng rng(9);
  int d = 4;
  Eigen::VectorXd w_true(d);
  for (int j = 0; j < d; ++j) w_true[j] = rng.normal();
  std::vector<RegExample> sup;
  for (int i = 0; i < 40; ++i) {
    RegExample ex;
    ex.x = Eigen::VectorXd(d);
    for (int j = 0; j < d; ++j) ex.x[j] = rng.normal();
    ex.y = w_true.dot(ex.x);
    sup.push_back(ex);
  }
  RidgeModel model = RidgeModel::fit(sup, 1e-8);
  CHECK((model.weights() - w_true).norm() < 1e-5);
  CHECK(model.nonconformity(sup[0].x, sup[0].y) < 1e-6);
}

TEST_CASE("ridge rejects degenerate systems") {
  // duplicated rows with lambda = 0: singular gram matrix
  Eigen::MatrixXd X(2, 2);
  X << 1, 2, 1, 2;
  Eigen::VectorXd Y(2);
  Y << 1, 3;  // inconsistent targets for identical inputs
  CHECK_THROWS_AS(RidgeModel::fit(X, Y, 0.0), NumericError);
  CHECK_THROWS_AS(RidgeModel::fit(X, Y, -1.0), ArgumentError);
}

TEST_CASE("prototype LOO scores match a manual refit") {
  std::vector<Example> sup = {{vec2(0, 0), 0},
                              {vec2(2, 0), 0},
                              {vec2(5, 0), 1},
                              {vec2(7, 0), 1}};
  ScoreSample loo = prototype_loo_scores(sup);
  // holding out (0,0): prototypes are (2,0) and (6,0); distances 2 and 6
  double e0 = std::exp(-2.0);
  double e1 = std::exp(-6.0);
  CHECK(loo.values()[0] == doctest::Approx(-e0 / (e0 + e1)).epsilon(1e-12));
  CHECK(loo.size() == 4);
}

TEST_CASE("LOO scores are equivariant under support permutation") {
  Rng rng(13);
  std::vector<RegExample> sup;
  for (int i = 0; i < 8; ++i) {
    RegExample ex;
    ex.x = vec2(rng.normal(), rng.normal());
    ex.y = rng.normal();
    sup.push_back(ex);
  }
  std::vector<double> base = ridge_loo_scores(sup, 0.5).values();
  std::vector<std::size_t> perm = {3, 1, 7, 0, 5, 2, 6, 4};
  std::vector<RegExample> shuffled;
  for (std::size_t i : perm) shuffled.push_back(sup[i]);
  std::vector<double> permuted = ridge_loo_scores(shuffled, 0.5).values();
  for (std::size_t i = 0; i < perm.size(); ++i) {
    CHECK(permuted[i] == doctest::Approx(base[perm[i]]).epsilon(1e-12));
  }
}

TEST_CASE("LOO requires enough support") {
  CHECK_THROWS_AS(prototype_loo_scores({{vec2(0, 0), 0}}), ArgumentError);
  CHECK_THROWS_AS(ridge_loo_scores({{vec2(0, 0), 1.0}}, 0.1), ArgumentError);
  // a singleton class disappears when held out
  std::vector<Example> fragile = {{vec2(0, 0), 0}, {vec2(1, 0), 0},
                                  {vec2(5, 0), 1}};
  CHECK_THROWS_AS(prototype_loo_scores(fragile), ArgumentError);
}

TEST_CASE("random projection is deterministic and scaled") {
  Eigen::MatrixXd a = random_projection(20, 10, 42);
  Eigen::MatrixXd b = random_projection(20, 10, 42);
  CHECK(a.isApprox(b));
  Eigen::MatrixXd c = random_projection(20, 10, 43);
  CHECK(!a.isApprox(c));
  // entries N(0, 1/d_out): column norms concentrate near 1
  Eigen::MatrixXd big = random_projection(400, 200, 1);
  double mean_sq = big.array().square().mean();
  CHECK(mean_sq == doctest::Approx(1.0 / 200.0).epsilon(0.1));
}
