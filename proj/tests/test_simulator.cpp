#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "fscp/simulator.hpp"

using namespace fscp;

namespace {

TaskDistributionConfig cls_config() {
  TaskDistributionConfig cfg;
  cfg.kind = Domain::kClassification;
  cfg.n_ways = 4;
  cfg.feature_dim = 3;
  cfg.master_seed = 99;
  return cfg;
}

}  // namespace

TEST_CASE("episodes are reproducible from their seeds alone") {
  TaskDistributionConfig cfg = cls_config();
  ClassificationTask a(cfg, 7);
  ClassificationTask b(cfg, 7);
  CHECK(a.class_means().isApprox(b.class_means()));
  ClsEpisode ea = a.sample_episode(3, 2, 10, 5);
  ClsEpisode eb = b.sample_episode(3, 2, 10, 5);
  REQUIRE(ea.support.size() == eb.support.size());
  for (std::size_t i = 0; i < ea.support.size(); ++i) {
    CHECK(ea.support[i].x == eb.support[i].x);
    CHECK(ea.support[i].label == eb.support[i].label);
  }
  // different episode seed, same task: different draws
  ClsEpisode ec = a.sample_episode(3, 2, 10, 6);
  CHECK(ea.support[0].x != ec.support[0].x);
  // different task seed: different means
  ClassificationTask c(cfg, 8);
  CHECK(!a.class_means().isApprox(c.class_means()));
}

TEST_CASE("episode draws do not depend on sampling order of other episodes") {
  TaskDistributionConfig cfg = cls_config();
  ClassificationTask t(cfg, 3);
  ClsEpisode first = t.sample_episode(2, 1, 5, 11);
  t.sample_episode(2, 1, 5, 12);  // interleaved draw
  ClsEpisode again = t.sample_episode(2, 1, 5, 11);
  CHECK(first.extra[4].x == again.extra[4].x);
}

TEST_CASE("balanced support has exactly k examples per class") {
  TaskDistributionConfig cfg = cls_config();
  ClassificationTask t(cfg, 1);
  ClsEpisode ep = t.sample_episode(5, 3, 17, 0);
  CHECK(ep.support.size() == 20);  // 5 per class, 4 ways
  CHECK(ep.query.size() == 3);
  CHECK(ep.extra.size() == 17);
  std::vector<int> counts(4, 0);
  for (const Example& ex : ep.support) counts[static_cast<std::size_t>(ex.label)]++;
  for (int c : counts) CHECK(c == 5);
}

TEST_CASE("unbalanced support counts are totals") {
  TaskDistributionConfig cfg = cls_config();
  cfg.balanced_support = false;
  ClassificationTask t(cfg, 1);
  ClsEpisode ep = t.sample_episode(9, 1, 5, 0);
  CHECK(ep.support.size() == 9);
}

TEST_CASE("labels are uniform across draws") {
  TaskDistributionConfig cfg = cls_config();
  ClassificationTask t(cfg, 2);
  ClsEpisode ep = t.sample_episode(2, 1, 8000, 0);
  std::vector<int> counts(4, 0);
  for (const Example& ex : ep.extra) counts[static_cast<std::size_t>(ex.label)]++;
  double expected = 2000.0;
  double chi2 = 0.0;
  for (int c : counts) {
    double d = static_cast<double>(c) - expected;
    chi2 += d * d / expected;
  }
  CHECK(chi2 < 16.27);  // chi^2_3 at p = 0.001
}

TEST_CASE("within-episode draws are exchangeable by position") {
  // rank of a fixed statistic (first feature of the extra draws) should be
  // uniform over positions across many episodes
  TaskDistributionConfig cfg = cls_config();
  int positions = 5;
  std::vector<int> argmax_counts(static_cast<std::size_t>(positions), 0);
  int episodes = 5000;
  for (int e = 0; e < episodes; ++e) {
    ClassificationTask t(cfg, static_cast<std::uint64_t>(e));
    ClsEpisode ep = t.sample_episode(2, 1, positions, 0);
    int best = 0;
    for (int i = 1; i < positions; ++i) {
      if (ep.extra[static_cast<std::size_t>(i)].x[0] >
          ep.extra[static_cast<std::size_t>(best)].x[0]) {
        best = i;
      }
    }
    argmax_counts[static_cast<std::size_t>(best)]++;
  }
  double expected = static_cast<double>(episodes) / positions;
  double chi2 = 0.0;
  for (int c : argmax_counts) {
    double d = static_cast<double>(c) - expected;
    chi2 += d * d / expected;
  }
  CHECK(chi2 < 18.47);  // chi^2_4 at p = 0.001
}

TEST_CASE("well-separated classes are nearly noiseless") {
  TaskDistributionConfig cfg = cls_config();
  cfg.feature_dim = 8;
  cfg.class_separation = 6.0;
  int correct = 0, total = 0;
  for (int s = 0; s < 40; ++s) {
    ClassificationTask t(cfg, static_cast<std::uint64_t>(s));
    ClsEpisode ep = t.sample_episode(2, 1, 50, 0);
    for (const Example& ex : ep.extra) {
      int best = 0;
      double best_d = (t.class_means().row(0).transpose() - ex.x).norm();
      for (int c = 1; c < cfg.n_ways; ++c) {
        double d = (t.class_means().row(c).transpose() - ex.x).norm();
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (best == ex.label) ++correct;
      ++total;
    }
  }
  CHECK(static_cast<double>(correct) / total > 0.95);
}

TEST_CASE("regression targets follow the linear model") {
  TaskDistributionConfig cfg;
  cfg.kind = Domain::kRegression;
  cfg.feature_dim = 6;
  cfg.noise_scale = 0.5;
  cfg.master_seed = 3;
  RegressionTask t(cfg, 11);
  RegEpisode ep = t.sample_episode(4, 1, 20000, 0);
  double sum = 0.0, sum_sq = 0.0;
  for (const RegExample& ex : ep.extra) {
    double r = ex.y - t.true_weights().dot(ex.x);
    sum += r;
    sum_sq += r * r;
  }
  double n = static_cast<double>(ep.extra.size());
  double mean = sum / n;
  double var = sum_sq / n - mean * mean;
  CHECK(mean == doctest::Approx(0.0).epsilon(1).scale(0.02));
  CHECK(var == doctest::Approx(0.25).epsilon(0.05));
}

TEST_CASE("config validation") {
  TaskDistributionConfig cfg = cls_config();
  cfg.n_ways = 1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = cls_config();
  cfg.feature_dim = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = cls_config();
  cfg.noise_scale = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  ClassificationTask t(cls_config(), 0);
  CHECK_THROWS_AS(t.sample_episode(0, 1, 1, 0), ArgumentError);
}

TEST_CASE("episode export format") {
  TaskDistributionConfig cfg = cls_config();
  ClassificationTask t(cfg, 5);
  ClsEpisode ep = t.sample_episode(1, 2, 3, 0);
  std::ostringstream out;
  export_episode(out, ep);
  std::istringstream in(out.str());
  std::string line;
  int lines = 0, support_lines = 0;
  while (std::getline(in, line)) {
    ++lines;
    CHECK(line.rfind("5,", 0) == 0);  // task id first
    if (line.find(",support,") != std::string::npos) ++support_lines;
    // task_id, split, label, then feature_dim features
    CHECK(std::count(line.begin(), line.end(), ',') == 2 + cfg.feature_dim);
  }
  CHECK(lines == 4 + 2 + 3);  // balanced support: 1 per class
  CHECK(support_lines == 4);
}
