#include "fscp/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <numeric>
#include <optional>
#include <queue>
#include <sstream>
#include <thread>

#include "fscp/errors.hpp"

namespace fscp {

namespace {

constexpr std::uint64_t kTagTrial = 0x747269616cull;  // "trial"
constexpr std::uint64_t kTagOuter = 0x6f75746572ull;  // "outer"
constexpr std::uint64_t kTagInner = 0x696e6e6572ull;  // "inner"
constexpr std::uint64_t kTagQuery = 0x71756572ull;    // "quer"
constexpr std::uint64_t kEvalTaskBase = 1u << 20;     // keep pools disjoint

int to_int(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    int v = std::stoi(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("bad integer for " + key + ": " + value);
  }
}

double to_double(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("bad number for " + key + ": " + value);
  }
}

std::uint64_t to_u64(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    std::uint64_t v = std::stoull(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("bad seed for " + key + ": " + value);
  }
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("bad boolean for " + key + ": " + value);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::stringstream ss(s);
  while (std::getline(ss, item, sep)) out.push_back(item);
  return out;
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body) {
  unsigned hw = std::thread::hardware_concurrency();
  std::size_t n_threads = std::max(1u, hw);
  n_threads = std::min(n_threads, n);
  if (n_threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  for (std::size_t w = 0; w < n_threads; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          body(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          return;
        }
      }
    });
  }
  for (std::thread& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

// Same step-function search as lambda_correction, but over per-task sorted
// score arrays without copying them (heap merge of the breakpoints).
struct CalView {
  const std::vector<double>* sorted_scores;  // ascending
  double q_hat;
};

double lambda_pooled(const std::vector<CalView>& views, double beta) {
  double l = static_cast<double>(views.size());
  if (beta > l / (l + 1.0) + 1e-12) {
    throw InfeasibleError(
        "beta exceeds l/(l+1); more calibration tasks required");
  }
  using Item = std::pair<double, std::size_t>;  // (breakpoint, view index)
  auto cmp = [](const Item& a, const Item& b) { return a.first > b.first; };
  std::priority_queue<Item, std::vector<Item>, decltype(cmp)> heap(cmp);
  std::vector<std::size_t> cursor(views.size(), 0);
  for (std::size_t i = 0; i < views.size(); ++i) {
    heap.emplace((*views[i].sorted_scores)[0] - views[i].q_hat, i);
  }
  double mass = 0.0;
  while (!heap.empty()) {
    auto [value, i] = heap.top();
    heap.pop();
    mass += 1.0 / (static_cast<double>(views[i].sorted_scores->size()) * (l + 1.0));
    if (mass >= beta - 1e-12) return value;
    if (++cursor[i] < views[i].sorted_scores->size()) {
      heap.emplace((*views[i].sorted_scores)[cursor[i]] - views[i].q_hat, i);
    }
  }
  throw InfeasibleError("beta unreachable from calibration records");
}

struct Row {
  long trial_id = 0;
  std::string method;
  double epsilon = 0.0;
  std::optional<double> epsilon_prime;
  std::optional<int> covered;
  std::optional<double> set_size;
  std::optional<double> q_hat;
  std::optional<double> lambda;
  bool infeasible = false;
};

struct MethodMask {
  bool meta = false;
  bool delta = false;
  bool full = false;
  bool baselines = false;
};

MethodMask parse_methods(const ExperimentConfig& cfg) {
  MethodMask m;
  if (cfg.method == "all") {
    m.meta = m.delta = m.full = true;
    m.baselines = cfg.domain == Domain::kClassification;
  } else if (cfg.method == "meta") {
    m.meta = m.delta = true;
  } else if (cfg.method == "full") {
    m.full = true;
  } else if (cfg.method == "baselines") {
    m.baselines = cfg.domain == Domain::kClassification;
  } else {
    throw ConfigError("unknown method: " + cfg.method);
  }
  return m;
}

void write_rows(const std::string& path, const std::vector<Row>& rows,
                std::uint64_t seed) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open results file: " + path);
  out << "trial_id,method,epsilon,epsilon_prime,covered,set_size,q_hat,lambda,"
         "seed\n";
  auto field = [](const std::optional<double>& v) {
    return v ? format_number(*v) : std::string();
  };
  for (const Row& r : rows) {
    out << r.trial_id << ',' << r.method << ',' << format_number(r.epsilon)
        << ',';
    if (r.infeasible) {
      out << "infeasible";
    } else {
      out << field(r.epsilon_prime);
    }
    out << ',';
    if (r.covered) out << *r.covered;
    out << ',' << field(r.set_size) << ',' << field(r.q_hat) << ','
        << field(r.lambda) << ',' << seed << '\n';
  }
}

}  // namespace

std::string format_number(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

void ExperimentConfig::apply(const std::string& key, const std::string& value) {
  if (key == "domain") {
    if (value == "classification") {
      domain = Domain::kClassification;
    } else if (value == "regression") {
      domain = Domain::kRegression;
    } else {
      throw ConfigError("bad domain: " + value);
    }
  } else if (key == "n_train_tasks") {
    n_train_tasks = to_int(key, value);
  } else if (key == "n_cal_tasks") {
    n_cal_tasks = to_int(key, value);
  } else if (key == "n_eval_tasks") {
    n_eval_tasks = to_int(key, value);
  } else if (key == "n_trials") {
    n_trials = to_int(key, value);
  } else if (key == "n_ways") {
    n_ways = to_int(key, value);
  } else if (key == "feature_dim") {
    feature_dim = to_int(key, value);
  } else if (key == "class_separation") {
    class_separation = to_double(key, value);
  } else if (key == "noise_scale") {
    noise_scale = to_double(key, value);
  } else if (key == "weight_scale") {
    weight_scale = to_double(key, value);
  } else if (key == "k_support") {
    k_support = to_int(key, value);
  } else if (key == "balanced_support") {
    balanced_support = to_bool(key, value);
  } else if (key == "m_extra") {
    m_extra = to_int(key, value);
  } else if (key == "q_query") {
    q_query = to_int(key, value);
  } else if (key == "epsilon") {
    epsilons.clear();
    for (const std::string& item : split(value, ',')) {
      epsilons.push_back(to_double(key, item));
    }
  } else if (key == "delta") {
    delta = to_double(key, value);
  } else if (key == "k_folds") {
    k_folds = to_int(key, value);
  } else if (key == "hidden") {
    hidden = to_int(key, value);
  } else if (key == "epochs") {
    epochs = to_int(key, value);
  } else if (key == "step_size") {
    step_size = to_double(key, value);
  } else if (key == "batch") {
    batch = to_int(key, value);
  } else if (key == "optimizer") {
    if (value != "gd" && value != "adam") {
      throw ConfigError("optimizer must be gd or adam");
    }
    optimizer = value;
  } else if (key == "clip_norm") {
    clip_norm = to_double(key, value);
  } else if (key == "ridge_lambda") {
    ridge_lambda = to_double(key, value);
  } else if (key == "seed") {
    seed = to_u64(key, value);
  } else if (key == "method") {
    method = value;
  } else if (key == "mode") {
    if (value != "marginal" && value != "conditional") {
      throw ConfigError("mode must be marginal or conditional");
    }
    mode = value;
  } else if (key == "n_outer") {
    n_outer = to_int(key, value);
  } else if (key == "n_inner") {
    n_inner = to_int(key, value);
  } else if (key == "top_k") {
    top_k.clear();
    for (const std::string& item : split(value, ',')) {
      top_k.push_back(to_int(key, item));
    }
  } else if (key == "out") {
    out_dir = value;
  } else {
    throw ConfigError("unknown config key: " + key);
  }
}

void ExperimentConfig::validate() const {
  if (n_trials < 1) throw ConfigError("n_trials must be >= 1");
  if (n_train_tasks < k_folds) {
    throw ConfigError("n_train_tasks must be >= k_folds");
  }
  if (n_cal_tasks < 1) throw ConfigError("n_cal_tasks must be >= 1");
  if (n_eval_tasks < n_cal_tasks + 1) {
    throw ConfigError("n_eval_tasks must exceed n_cal_tasks");
  }
  if (epsilons.empty()) throw ConfigError("epsilon list is empty");
  for (double e : epsilons) {
    if (!(e > 0.0) || !(e < 1.0)) throw ConfigError("epsilon outside (0, 1)");
  }
  if (!(delta > 0.0) || !(delta < 1.0)) throw ConfigError("delta outside (0, 1)");
  if (mode == "conditional" && (n_outer < 1 || n_inner < 1)) {
    throw ConfigError("conditional mode needs n_outer and n_inner >= 1");
  }
  task_config().validate();
}

TaskDistributionConfig ExperimentConfig::task_config() const {
  TaskDistributionConfig t;
  t.kind = domain;
  t.n_ways = n_ways;
  t.feature_dim = feature_dim;
  t.class_separation = class_separation;
  t.noise_scale = noise_scale;
  t.regression_weight_scale = weight_scale;
  t.k_support = k_support;
  t.balanced_support = domain == Domain::kClassification && balanced_support;
  t.m_extra = m_extra;
  t.q_query = q_query;
  t.master_seed = seed;
  return t;
}

TrainConfig ExperimentConfig::train_config(std::uint64_t stream_tag) const {
  TrainConfig t;
  t.epochs = epochs;
  t.step_size = step_size;
  t.batch = batch;
  t.seed = seed ^ (stream_tag * 0x9e3779b97f4a7c15ull + 0x5851f42d4c957f2dull);
  t.adam = optimizer == "adam";
  t.clip_norm = clip_norm;
  return t;
}

std::map<std::string, std::string> ExperimentConfig::load_key_values(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      if (line.find_first_not_of(" \t\r") != std::string::npos) {
        throw ConfigError("malformed config line: " + line);
      }
      continue;
    }
    auto trim = [](std::string s) {
      std::size_t a = s.find_first_not_of(" \t\r");
      std::size_t b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  ExperimentConfig cfg;
  for (const auto& [key, value] : load_key_values(path)) cfg.apply(key, value);
  return cfg;
}

PredictionSet top_k_baseline(const std::vector<double>& probs, int k) {
  if (probs.empty()) throw ArgumentError("empty probability vector");
  if (k < 1) throw ArgumentError("k must be >= 1");
  std::vector<int> order(probs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return probs[static_cast<std::size_t>(a)] > probs[static_cast<std::size_t>(b)];
  });
  PredictionSet set;
  set.kind = PredictionSet::Kind::kLabels;
  set.level = 0.0;
  std::size_t take = std::min(static_cast<std::size_t>(k), probs.size());
  set.labels.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take));
  std::sort(set.labels.begin(), set.labels.end());
  return set;
}

PredictionSet naive_baseline(const std::vector<double>& probs, double epsilon) {
  if (probs.empty()) throw ArgumentError("empty probability vector");
  if (!(epsilon > 0.0) || !(epsilon < 1.0)) {
    throw ArgumentError("epsilon outside (0, 1)");
  }
  std::vector<int> order(probs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return probs[static_cast<std::size_t>(a)] > probs[static_cast<std::size_t>(b)];
  });
  PredictionSet set;
  set.kind = PredictionSet::Kind::kLabels;
  set.level = 1.0 - epsilon;
  double mass = 0.0;
  for (int label : order) {
    set.labels.push_back(label);
    mass += probs[static_cast<std::size_t>(label)];
    if (mass > 1.0 - epsilon) break;
  }
  std::sort(set.labels.begin(), set.labels.end());
  return set;
}

namespace {

// ---------------------------------------------------------------------------
// Marginal-mode pipeline, templated over the domain through small adapters.

struct EvalCls {
  ClassificationTask task;
  PrototypeModel model;
  std::vector<double> loo;
  std::vector<double> sorted_test;
  std::vector<double> q_hat;  // per beta index
  std::vector<Example> support;  // kept for the full-CP refits
};

struct EvalReg {
  RegressionTask task;
  RidgeModel model;
  std::vector<double> loo;
  std::vector<double> sorted_test;
  std::vector<double> q_hat;
  std::vector<RegExample> support;  // kept for the split baseline
};

std::vector<double> sorted_true_scores(const PrototypeModel& model,
                                       const std::vector<Example>& examples) {
  std::vector<double> scores;
  scores.reserve(examples.size());
  for (const Example& ex : examples) {
    scores.push_back(model.nonconformity(ex.x, ex.label));
  }
  std::sort(scores.begin(), scores.end());
  return scores;
}

std::vector<double> sorted_true_scores(const RidgeModel& model,
                                       const std::vector<RegExample>& examples) {
  std::vector<double> scores;
  scores.reserve(examples.size());
  for (const RegExample& ex : examples) {
    scores.push_back(model.nonconformity(ex.x, ex.y));
  }
  std::sort(scores.begin(), scores.end());
  return scores;
}

struct BetaPlan {
  std::vector<double> betas;                 // distinct betas to train
  std::vector<std::size_t> meta_index;       // per epsilon
  std::vector<std::optional<std::size_t>> delta_index;  // per epsilon
  std::vector<std::optional<double>> eps_prime;         // per epsilon
};

BetaPlan make_beta_plan(const ExperimentConfig& cfg, const MethodMask& methods) {
  BetaPlan plan;
  if (methods.meta || methods.delta) {
    double l = static_cast<double>(cfg.n_cal_tasks);
    double min_eps = *std::min_element(cfg.epsilons.begin(), cfg.epsilons.end());
    if (1.0 - min_eps > l / (l + 1.0) + 1e-12) {
      throw InfeasibleError(
          "smallest epsilon needs more calibration tasks: 1 - epsilon must "
          "not exceed l/(l+1)");
    }
  }
  auto add_beta = [&](double beta) {
    for (std::size_t i = 0; i < plan.betas.size(); ++i) {
      if (std::abs(plan.betas[i] - beta) < 1e-12) return i;
    }
    plan.betas.push_back(beta);
    return plan.betas.size() - 1;
  };
  std::vector<int> m_list(static_cast<std::size_t>(cfg.n_cal_tasks),
                          cfg.m_extra);
  for (double eps : cfg.epsilons) {
    plan.meta_index.push_back(add_beta(1.0 - eps));
    std::optional<std::size_t> delta_idx;
    std::optional<double> eps_prime;
    if (methods.delta) {
      try {
        EpsilonAdjustment adj = epsilon_adjust(eps, cfg.delta, m_list);
        double l = static_cast<double>(cfg.n_cal_tasks);
        // the adjusted level must still clear the finite-sample floor
        if (1.0 - adj.epsilon_prime <= l / (l + 1.0) + 1e-12) {
          eps_prime = adj.epsilon_prime;
          delta_idx = add_beta(1.0 - adj.epsilon_prime);
        }
      } catch (const InfeasibleError&) {
        // left unset; trial rows carry the infeasible flag
      }
    }
    plan.delta_index.push_back(delta_idx);
    plan.eps_prime.push_back(eps_prime);
  }
  return plan;
}

template <class Eval>
std::vector<CalView> make_views(const std::vector<Eval>& pool,
                                const std::vector<std::size_t>& cal_indices,
                                std::size_t beta_index) {
  std::vector<CalView> views;
  views.reserve(cal_indices.size());
  for (std::size_t idx : cal_indices) {
    views.push_back({&pool[idx].sorted_test, pool[idx].q_hat[beta_index]});
  }
  return views;
}

RunOutcome run_marginal(const ExperimentConfig& cfg) {
  MethodMask methods = parse_methods(cfg);
  TaskDistributionConfig task_cfg = cfg.task_config();
  BetaPlan plan = make_beta_plan(cfg, methods);

  bool classification = cfg.domain == Domain::kClassification;

  // --- meta-training ------------------------------------------------------
  std::vector<SetRegressor> regressors;
  std::vector<EvalCls> pool_cls;
  std::vector<EvalReg> pool_reg;
  bool need_meta = methods.meta || methods.delta;
  if (classification) {
    std::vector<ClsEpisode> train_eps;
    if (need_meta) {
      for (int i = 0; i < cfg.n_train_tasks; ++i) {
        ClassificationTask task(task_cfg, static_cast<std::uint64_t>(i));
        train_eps.push_back(task.sample_episode(cfg.k_support, cfg.q_query,
                                                cfg.m_extra, 0));
      }
      for (std::size_t b = 0; b < plan.betas.size(); ++b) {
        regressors.push_back(crossfold_train(train_eps, cfg.k_folds,
                                             plan.betas[b], cfg.hidden,
                                             cfg.train_config(b))
                                 .regressor);
      }
    }
    for (int j = 0; j < cfg.n_eval_tasks; ++j) {
      ClassificationTask task(task_cfg, kEvalTaskBase + static_cast<std::uint64_t>(j));
      ClsEpisode ep = task.sample_episode(cfg.k_support, cfg.q_query, cfg.m_extra, 1);
      PrototypeModel model = PrototypeModel::fit(ep.support);
      EvalCls eval{std::move(task), std::move(model), {}, {}, {}, ep.support};
      if (need_meta) {
        eval.loo = prototype_loo_scores(ep.support).values();
        eval.sorted_test = sorted_true_scores(eval.model, ep.extra);
        for (const SetRegressor& reg : regressors) {
          eval.q_hat.push_back(reg.predict(eval.loo));
        }
      }
      pool_cls.push_back(std::move(eval));
    }
  } else {
    std::vector<RegEpisode> train_eps;
    if (need_meta) {
      for (int i = 0; i < cfg.n_train_tasks; ++i) {
        RegressionTask task(task_cfg, static_cast<std::uint64_t>(i));
        train_eps.push_back(task.sample_episode(cfg.k_support, cfg.q_query,
                                                cfg.m_extra, 0));
      }
      for (std::size_t b = 0; b < plan.betas.size(); ++b) {
        regressors.push_back(crossfold_train(train_eps, cfg.k_folds,
                                             plan.betas[b], cfg.ridge_lambda,
                                             cfg.hidden, cfg.train_config(b))
                                 .regressor);
      }
    }
    for (int j = 0; j < cfg.n_eval_tasks; ++j) {
      RegressionTask task(task_cfg, kEvalTaskBase + static_cast<std::uint64_t>(j));
      RegEpisode ep = task.sample_episode(cfg.k_support, cfg.q_query, cfg.m_extra, 1);
      RidgeModel model = RidgeModel::fit(ep.support, cfg.ridge_lambda);
      EvalReg eval{std::move(task), std::move(model), {}, {}, {}, ep.support};
      if (need_meta) {
        eval.loo = ridge_loo_scores(ep.support, cfg.ridge_lambda).values();
        eval.sorted_test = sorted_true_scores(eval.model, ep.extra);
        for (const SetRegressor& reg : regressors) {
          eval.q_hat.push_back(reg.predict(eval.loo));
        }
      }
      pool_reg.push_back(std::move(eval));
    }
  }

  // --- trials -------------------------------------------------------------
  std::size_t n_pool = classification ? pool_cls.size() : pool_reg.size();
  std::size_t l = static_cast<std::size_t>(cfg.n_cal_tasks);
  std::vector<std::vector<Row>> per_trial(static_cast<std::size_t>(cfg.n_trials));
  std::vector<int> candidates(static_cast<std::size_t>(cfg.n_ways));
  std::iota(candidates.begin(), candidates.end(), 0);

  parallel_for(static_cast<std::size_t>(cfg.n_trials), [&](std::size_t t) {
    Rng rng = Rng::stream(cfg.seed, kTagTrial, t);
    std::vector<std::size_t> indices(n_pool);
    std::iota(indices.begin(), indices.end(), 0);
    rng.shuffle(indices);
    std::vector<std::size_t> cal(indices.begin(),
                                 indices.begin() + static_cast<std::ptrdiff_t>(l));
    std::size_t target = indices[l];
    std::vector<Row>& rows = per_trial[t];

    auto emit = [&](Row row) {
      row.trial_id = static_cast<long>(t);
      rows.push_back(std::move(row));
    };

    if (classification) {
      const EvalCls& tgt = pool_cls[target];
      Rng qrng = Rng::stream(cfg.seed, kTagQuery, t);
      Example query = tgt.task.sample(qrng);
      std::vector<double> cand_scores(candidates.size());
      for (std::size_t y = 0; y < candidates.size(); ++y) {
        cand_scores[y] = tgt.model.nonconformity(query.x, candidates[y]);
      }
      double true_score = cand_scores[static_cast<std::size_t>(query.label)];

      std::vector<AugmentedScores> aug;
      if (methods.full) {
        aug.resize(candidates.size());
        std::vector<Example> sup = tgt.support;
        sup.push_back({query.x, 0});
        for (std::size_t y = 0; y < candidates.size(); ++y) {
          sup.back().label = candidates[y];
          PrototypeModel m = PrototypeModel::fit(sup);
          AugmentedScores a;
          a.test_score = m.nonconformity(query.x, candidates[y]);
          for (std::size_t j = 0; j + 1 < sup.size(); ++j) {
            a.support_scores.push_back(m.nonconformity(sup[j].x, sup[j].label));
          }
          aug[y] = std::move(a);
        }
      }

      std::vector<double> probs;
      if (methods.baselines) probs = tgt.model.probs(query.x);

      for (std::size_t ei = 0; ei < cfg.epsilons.size(); ++ei) {
        double eps = cfg.epsilons[ei];
        if (methods.meta) {
          std::size_t b = plan.meta_index[ei];
          double lambda = lambda_pooled(make_views(pool_cls, cal, b), 1.0 - eps);
          double thr = tgt.q_hat[b] + lambda;
          Row row;
          row.method = "meta-cp";
          row.epsilon = eps;
          row.covered = true_score <= thr ? 1 : 0;
          row.set_size = static_cast<double>(std::count_if(
              cand_scores.begin(), cand_scores.end(),
              [&](double s) { return s <= thr; }));
          row.q_hat = tgt.q_hat[b];
          row.lambda = lambda;
          emit(std::move(row));
        }
        if (methods.delta) {
          Row row;
          row.method = "meta-cp-delta";
          row.epsilon = eps;
          if (plan.delta_index[ei]) {
            std::size_t b = *plan.delta_index[ei];
            double beta = 1.0 - *plan.eps_prime[ei];
            double lambda = lambda_pooled(make_views(pool_cls, cal, b), beta);
            double thr = tgt.q_hat[b] + lambda;
            row.epsilon_prime = *plan.eps_prime[ei];
            row.covered = true_score <= thr ? 1 : 0;
            row.set_size = static_cast<double>(std::count_if(
                cand_scores.begin(), cand_scores.end(),
                [&](double s) { return s <= thr; }));
            row.q_hat = tgt.q_hat[b];
            row.lambda = lambda;
          } else {
            row.infeasible = true;
          }
          emit(std::move(row));
        }
        if (methods.full) {
          Row row;
          row.method = "full-cp";
          row.epsilon = eps;
          int covered = 0;
          int size = 0;
          for (std::size_t y = 0; y < candidates.size(); ++y) {
            double thr = inflated_quantile(1.0 - eps,
                                           ScoreSample(aug[y].support_scores));
            if (aug[y].test_score <= thr) {
              ++size;
              if (candidates[y] == query.label) covered = 1;
            }
          }
          row.covered = covered;
          row.set_size = static_cast<double>(size);
          emit(std::move(row));
        }
        if (methods.baselines) {
          for (int k : cfg.top_k) {
            PredictionSet set = top_k_baseline(probs, k);
            Row row;
            row.method = "top-" + std::to_string(k);
            row.epsilon = eps;
            row.covered = set.contains_label(query.label) ? 1 : 0;
            row.set_size = set.size();
            emit(std::move(row));
          }
          PredictionSet set = naive_baseline(probs, eps);
          Row row;
          row.method = "naive";
          row.epsilon = eps;
          row.covered = set.contains_label(query.label) ? 1 : 0;
          row.set_size = set.size();
          emit(std::move(row));
        }
      }
    } else {
      const EvalReg& tgt = pool_reg[target];
      Rng qrng = Rng::stream(cfg.seed, kTagQuery, t);
      RegExample query = tgt.task.sample(qrng);
      double point = tgt.model.predict(query.x);
      double true_score = std::abs(query.y - point);

      for (std::size_t ei = 0; ei < cfg.epsilons.size(); ++ei) {
        double eps = cfg.epsilons[ei];
        if (methods.meta) {
          std::size_t b = plan.meta_index[ei];
          double lambda = lambda_pooled(make_views(pool_reg, cal, b), 1.0 - eps);
          Correction c{lambda, 1.0 - eps, Correction::Mode::kEmpiricalF};
          PredictionSet set = meta_cp_interval(point, tgt.q_hat[b], c);
          Row row;
          row.method = "meta-cp";
          row.epsilon = eps;
          row.covered = set.contains_value(query.y) ? 1 : 0;
          row.set_size = set.size();
          row.q_hat = tgt.q_hat[b];
          row.lambda = lambda;
          emit(std::move(row));
        }
        if (methods.delta) {
          Row row;
          row.method = "meta-cp-delta";
          row.epsilon = eps;
          if (plan.delta_index[ei]) {
            std::size_t b = *plan.delta_index[ei];
            double beta = 1.0 - *plan.eps_prime[ei];
            double lambda = lambda_pooled(make_views(pool_reg, cal, b), beta);
            Correction c{lambda, beta, Correction::Mode::kEmpiricalF};
            PredictionSet set = meta_cp_interval(point, tgt.q_hat[b], c);
            row.epsilon_prime = *plan.eps_prime[ei];
            row.covered = set.contains_value(query.y) ? 1 : 0;
            row.set_size = set.size();
            row.q_hat = tgt.q_hat[b];
            row.lambda = lambda;
          } else {
            row.infeasible = true;
          }
          emit(std::move(row));
        }
        if (methods.full) {
          // split-conformal baseline: fit on the first half of the support,
          // calibrate on the held-out residuals
          std::size_t half = tgt.support.size() / 2;
          std::vector<RegExample> fit_part(tgt.support.begin(),
                                           tgt.support.begin() + static_cast<std::ptrdiff_t>(half));
          RidgeModel fit_model = RidgeModel::fit(fit_part, cfg.ridge_lambda);
          std::vector<double> residuals;
          for (std::size_t i = half; i < tgt.support.size(); ++i) {
            residuals.push_back(fit_model.nonconformity(tgt.support[i].x,
                                                        tgt.support[i].y));
          }
          PredictionSet set = split_cp_interval(fit_model.predict(query.x),
                                                ScoreSample(residuals), eps);
          Row row;
          row.method = "full-cp";
          row.epsilon = eps;
          row.covered = set.contains_value(query.y) ? 1 : 0;
          row.set_size = set.size();
          emit(std::move(row));
        }
      }
    }
  });

  std::vector<Row> rows;
  for (auto& trial_rows : per_trial) {
    for (Row& r : trial_rows) rows.push_back(std::move(r));
  }
  RunOutcome outcome;
  outcome.results_path = cfg.out_dir + "/results.csv";
  outcome.delta_requested = methods.delta;
  outcome.all_delta_infeasible =
      methods.delta &&
      std::none_of(plan.delta_index.begin(), plan.delta_index.end(),
                   [](const auto& v) { return v.has_value(); });
  write_rows(outcome.results_path, rows, cfg.seed);
  return outcome;
}

// ---------------------------------------------------------------------------
// Conditional mode: outer resamples redraw the calibration tasks, inner
// trials measure the realized per-calibration coverage. One row per
// (outer resample, epsilon, method); `covered` records whether the inner
// coverage cleared 1 - epsilon.

RunOutcome run_conditional(const ExperimentConfig& cfg) {
  MethodMask methods = parse_methods(cfg);
  methods.full = false;       // correction-based methods only in this mode
  methods.baselines = false;
  TaskDistributionConfig task_cfg = cfg.task_config();
  BetaPlan plan = make_beta_plan(cfg, methods);
  bool classification = cfg.domain == Domain::kClassification;
  std::size_t l = static_cast<std::size_t>(cfg.n_cal_tasks);

  std::vector<SetRegressor> regressors;
  if (classification) {
    std::vector<ClsEpisode> train_eps;
    for (int i = 0; i < cfg.n_train_tasks; ++i) {
      ClassificationTask task(task_cfg, static_cast<std::uint64_t>(i));
      train_eps.push_back(
          task.sample_episode(cfg.k_support, cfg.q_query, cfg.m_extra, 0));
    }
    for (std::size_t b = 0; b < plan.betas.size(); ++b) {
      regressors.push_back(crossfold_train(train_eps, cfg.k_folds,
                                           plan.betas[b], cfg.hidden,
                                           cfg.train_config(b))
                               .regressor);
    }
  } else {
    std::vector<RegEpisode> train_eps;
    for (int i = 0; i < cfg.n_train_tasks; ++i) {
      RegressionTask task(task_cfg, static_cast<std::uint64_t>(i));
      train_eps.push_back(
          task.sample_episode(cfg.k_support, cfg.q_query, cfg.m_extra, 0));
    }
    for (std::size_t b = 0; b < plan.betas.size(); ++b) {
      regressors.push_back(crossfold_train(train_eps, cfg.k_folds,
                                           plan.betas[b], cfg.ridge_lambda,
                                           cfg.hidden, cfg.train_config(b))
                               .regressor);
    }
  }

  std::vector<std::vector<Row>> per_outer(static_cast<std::size_t>(cfg.n_outer));
  std::vector<int> candidates(static_cast<std::size_t>(cfg.n_ways));
  std::iota(candidates.begin(), candidates.end(), 0);

  parallel_for(static_cast<std::size_t>(cfg.n_outer), [&](std::size_t o) {
    Rng rng = Rng::stream(cfg.seed, kTagOuter, o);

    // fresh calibration tasks for this resample
    struct CalArt {
      std::vector<double> sorted_test;
      std::vector<double> q_hat;  // per beta index
    };
    std::vector<CalArt> cal(l);
    for (std::size_t i = 0; i < l; ++i) {
      std::uint64_t task_seed = rng.next_u64();
      std::vector<double> loo;
      if (classification) {
        ClassificationTask task(task_cfg, task_seed);
        ClsEpisode ep = task.sample_episode(cfg.k_support, 1, cfg.m_extra, 0);
        PrototypeModel model = PrototypeModel::fit(ep.support);
        loo = prototype_loo_scores(ep.support).values();
        cal[i].sorted_test = sorted_true_scores(model, ep.extra);
      } else {
        RegressionTask task(task_cfg, task_seed);
        RegEpisode ep = task.sample_episode(cfg.k_support, 1, cfg.m_extra, 0);
        RidgeModel model = RidgeModel::fit(ep.support, cfg.ridge_lambda);
        loo = ridge_loo_scores(ep.support, cfg.ridge_lambda).values();
        cal[i].sorted_test = sorted_true_scores(model, ep.extra);
      }
      for (const SetRegressor& reg : regressors) {
        cal[i].q_hat.push_back(reg.predict(loo));
      }
    }
    std::vector<double> lambdas(plan.betas.size());
    for (std::size_t b = 0; b < plan.betas.size(); ++b) {
      std::vector<CalView> views;
      views.reserve(l);
      for (const CalArt& a : cal) views.push_back({&a.sorted_test, a.q_hat[b]});
      lambdas[b] = lambda_pooled(views, plan.betas[b]);
    }

    // inner trials share target-task artifacts across epsilons and methods
    struct Acc {
      long covered = 0;
      double size = 0.0;
      double q_hat = 0.0;
    };
    std::vector<Acc> acc(plan.betas.size());
    for (int t = 0; t < cfg.n_inner; ++t) {
      Rng irng = Rng::stream(cfg.seed, kTagInner, o, static_cast<std::uint64_t>(t));
      std::uint64_t task_seed = irng.next_u64();
      std::vector<double> q_hat(plan.betas.size());
      if (classification) {
        ClassificationTask task(task_cfg, task_seed);
        ClsEpisode ep = task.sample_episode(cfg.k_support, 1, 1, 0);
        PrototypeModel model = PrototypeModel::fit(ep.support);
        std::vector<double> loo = prototype_loo_scores(ep.support).values();
        for (std::size_t b = 0; b < regressors.size(); ++b) {
          q_hat[b] = regressors[b].predict(loo);
        }
        const Example& query = ep.query[0];
        std::vector<double> cand_scores(candidates.size());
        for (std::size_t y = 0; y < candidates.size(); ++y) {
          cand_scores[y] = model.nonconformity(query.x, candidates[y]);
        }
        double true_score = cand_scores[static_cast<std::size_t>(query.label)];
        for (std::size_t b = 0; b < plan.betas.size(); ++b) {
          double thr = q_hat[b] + lambdas[b];
          acc[b].covered += true_score <= thr ? 1 : 0;
          acc[b].size += static_cast<double>(std::count_if(
              cand_scores.begin(), cand_scores.end(),
              [&](double s) { return s <= thr; }));
          acc[b].q_hat += q_hat[b];
        }
      } else {
        RegressionTask task(task_cfg, task_seed);
        RegEpisode ep = task.sample_episode(cfg.k_support, 1, 1, 0);
        RidgeModel model = RidgeModel::fit(ep.support, cfg.ridge_lambda);
        std::vector<double> loo = ridge_loo_scores(ep.support, cfg.ridge_lambda).values();
        for (std::size_t b = 0; b < regressors.size(); ++b) {
          q_hat[b] = regressors[b].predict(loo);
        }
        const RegExample& query = ep.query[0];
        double true_score = model.nonconformity(query.x, query.y);
        for (std::size_t b = 0; b < plan.betas.size(); ++b) {
          double thr = q_hat[b] + lambdas[b];
          acc[b].covered += true_score <= thr ? 1 : 0;
          acc[b].size += thr > 0.0 ? 2.0 * thr : 0.0;
          acc[b].q_hat += q_hat[b];
        }
      }
    }

    std::vector<Row>& rows = per_outer[o];
    double n_inner = static_cast<double>(cfg.n_inner);
    auto emit = [&](const std::string& method, double eps,
                    std::optional<double> eps_prime, std::size_t b) {
      Row row;
      row.trial_id = static_cast<long>(o);
      row.method = method;
      row.epsilon = eps;
      row.epsilon_prime = eps_prime;
      double inner_cov = static_cast<double>(acc[b].covered) / n_inner;
      row.covered = inner_cov >= 1.0 - eps ? 1 : 0;
      row.set_size = acc[b].size / n_inner;
      row.q_hat = acc[b].q_hat / n_inner;
      row.lambda = lambdas[b];
      rows.push_back(std::move(row));
    };
    for (std::size_t ei = 0; ei < cfg.epsilons.size(); ++ei) {
      double eps = cfg.epsilons[ei];
      if (methods.meta) emit("meta-cp", eps, std::nullopt, plan.meta_index[ei]);
      if (methods.delta) {
        if (plan.delta_index[ei]) {
          emit("meta-cp-delta", eps, plan.eps_prime[ei], *plan.delta_index[ei]);
        } else {
          Row row;
          row.trial_id = static_cast<long>(o);
          row.method = "meta-cp-delta";
          row.epsilon = eps;
          row.infeasible = true;
          rows.push_back(std::move(row));
        }
      }
    }
  });

  std::vector<Row> rows;
  for (auto& outer_rows : per_outer) {
    for (Row& r : outer_rows) rows.push_back(std::move(r));
  }
  RunOutcome outcome;
  outcome.results_path = cfg.out_dir + "/results.csv";
  outcome.delta_requested = methods.delta;
  outcome.all_delta_infeasible =
      methods.delta &&
      std::none_of(plan.delta_index.begin(), plan.delta_index.end(),
                   [](const auto& v) { return v.has_value(); });
  write_rows(outcome.results_path, rows, cfg.seed);
  return outcome;
}

}  // namespace

RunOutcome run_experiment(const ExperimentConfig& config) {
  config.validate();
  if (config.mode == "conditional") return run_conditional(config);
  return run_marginal(config);
}

void summarize_file(const std::string& results_csv,
                    const std::string& summary_csv) {
  std::ifstream in(results_csv);
  if (!in) throw ConfigError("cannot open results file: " + results_csv);
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("empty results file");
  if (line != "trial_id,method,epsilon,epsilon_prime,covered,set_size,q_hat,"
              "lambda,seed") {
    throw ConfigError("unexpected results header: " + line);
  }
  struct Group {
    double epsilon = 0.0;
    std::vector<double> covered;
    std::vector<double> size;
  };
  std::map<std::pair<std::string, std::string>, Group> groups;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields = split(line, ',');
    // split() drops trailing empty fields; pad to the full column count
    while (fields.size() < 9) fields.push_back("");
    if (fields.size() != 9) {
      throw ConfigError("malformed results row at line " +
                        std::to_string(line_no));
    }
    if (fields[4].empty()) continue;  // infeasible rows carry no outcome
    Group& g = groups[{fields[1], fields[2]}];
    g.epsilon = to_double("epsilon", fields[2]);
    g.covered.push_back(to_double("covered", fields[4]));
    g.size.push_back(to_double("set_size", fields[5]));
  }
  auto mean_std = [](const std::vector<double>& v) {
    double mean = std::accumulate(v.begin(), v.end(), 0.0) /
                  static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    double sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1))
                             : 0.0;
    return std::pair{mean, sd};
  };
  std::vector<std::pair<std::pair<std::string, std::string>, const Group*>> ordered;
  for (const auto& [key, g] : groups) ordered.emplace_back(key, &g);
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const auto& a, const auto& b) {
                     if (a.first.first != b.first.first)
                       return a.first.first < b.first.first;
                     return a.second->epsilon < b.second->epsilon;
                   });
  std::ofstream out(summary_csv);
  if (!out) throw ConfigError("cannot open summary file: " + summary_csv);
  out << "method,epsilon,mean_coverage,std_coverage,mean_size,std_size,"
         "n_trials\n";
  for (const auto& [key, g] : ordered) {
    auto [cov_mean, cov_sd] = mean_std(g->covered);
    auto [size_mean, size_sd] = mean_std(g->size);
    out << key.first << ',' << key.second << ',' << format_number(cov_mean)
        << ',' << format_number(cov_sd) << ',' << format_number(size_mean)
        << ',' << format_number(size_sd) << ',' << g->covered.size() << '\n';
  }
}

void simulate_to_file(const ExperimentConfig& config, const std::string& path) {
  config.validate();
  TaskDistributionConfig task_cfg = config.task_config();
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open output file: " + path);
  auto write_pool = [&](std::uint64_t base, int count, std::uint64_t ep_seed) {
    for (int i = 0; i < count; ++i) {
      std::uint64_t id = base + static_cast<std::uint64_t>(i);
      if (config.domain == Domain::kClassification) {
        ClassificationTask task(task_cfg, id);
        export_episode(out, task.sample_episode(config.k_support,
                                                config.q_query,
                                                config.m_extra, ep_seed));
      } else {
        RegressionTask task(task_cfg, id);
        export_episode(out, task.sample_episode(config.k_support,
                                                config.q_query,
                                                config.m_extra, ep_seed));
      }
    }
  };
  write_pool(0, config.n_train_tasks, 0);
  write_pool(kEvalTaskBase, config.n_eval_tasks, 1);
}

std::vector<std::string> train_to_files(const ExperimentConfig& config) {
  config.validate();
  TaskDistributionConfig task_cfg = config.task_config();
  std::vector<std::string> paths;
  if (config.domain == Domain::kClassification) {
    std::vector<ClsEpisode> train_eps;
    for (int i = 0; i < config.n_train_tasks; ++i) {
      ClassificationTask task(task_cfg, static_cast<std::uint64_t>(i));
      train_eps.push_back(task.sample_episode(config.k_support, config.q_query,
                                              config.m_extra, 0));
    }
    for (std::size_t ei = 0; ei < config.epsilons.size(); ++ei) {
      double eps = config.epsilons[ei];
      CrossfoldResult r = crossfold_train(train_eps, config.k_folds, 1.0 - eps,
                                          config.hidden, config.train_config(ei));
      std::string path =
          config.out_dir + "/quantile_model_eps" + format_number(eps) + ".txt";
      r.regressor.save(path);
      paths.push_back(path);
    }
  } else {
    std::vector<RegEpisode> train_eps;
    for (int i = 0; i < config.n_train_tasks; ++i) {
      RegressionTask task(task_cfg, static_cast<std::uint64_t>(i));
      train_eps.push_back(task.sample_episode(config.k_support, config.q_query,
                                              config.m_extra, 0));
    }
    for (std::size_t ei = 0; ei < config.epsilons.size(); ++ei) {
      double eps = config.epsilons[ei];
      CrossfoldResult r = crossfold_train(train_eps, config.k_folds, 1.0 - eps,
                                          config.ridge_lambda, config.hidden,
                                          config.train_config(ei));
      std::string path =
          config.out_dir + "/quantile_model_eps" + format_number(eps) + ".txt";
      r.regressor.save(path);
      paths.push_back(path);
    }
  }
  return paths;
}

}  // namespace fscp
