#pragma once

#include <map>
#include <string>
#include <vector>

#include "fscp/calibration.hpp"
#include "fscp/core.hpp"
#include "fscp/quantile_pipeline.hpp"
#include "fscp/simulator.hpp"

namespace fscp {

// Full experiment settings; mirrors the flat key=value config file. Every
// field is addressable by the key of the same name (see apply()).
struct ExperimentConfig {
  Domain domain = Domain::kClassification;
  int n_train_tasks = 50;
  int n_cal_tasks = 25;   // l, calibration tasks per trial
  int n_eval_tasks = 200; // pool the per-trial partitions draw from
  int n_trials = 5000;

  int n_ways = 10;
  int feature_dim = 8;
  double class_separation = 3.0;
  double noise_scale = 1.0;
  double weight_scale = 1.0;
  int k_support = 16;  // per class for balanced classification, total otherwise
  bool balanced_support = true;
  int m_extra = 2000;
  int q_query = 1;

  std::vector<double> epsilons = {0.05, 0.1, 0.2, 0.3};
  double delta = 0.1;
  int k_folds = 5;

  int hidden = 32;
  int epochs = 400;
  double step_size = 1e-3;
  int batch = 32;
  std::string optimizer = "gd";  // gd | adam
  double clip_norm = 10.0;
  double ridge_lambda = 0.1;

  std::uint64_t seed = 0;
  std::string method = "all";      // all | meta | full | baselines
  std::string mode = "marginal";   // marginal | conditional
  int n_outer = 500;               // conditional mode: calibration resamples
  int n_inner = 2000;              // conditional mode: trials per resample
  std::vector<int> top_k = {1, 3, 5};
  std::string out_dir = ".";

  // Set one field from its config-file key; throws ConfigError on unknown
  // keys or unparsable values.
  void apply(const std::string& key, const std::string& value);
  void validate() const;

  TaskDistributionConfig task_config() const;
  TrainConfig train_config(std::uint64_t stream_tag) const;

  static std::map<std::string, std::string> load_key_values(
      const std::string& path);
  static ExperimentConfig from_file(const std::string& path);
};

struct RunOutcome {
  std::string results_path;
  bool delta_requested = false;
  bool all_delta_infeasible = false;
};

// Algorithm-1 pipeline end to end: train quantile predictors per epsilon,
// build the evaluation pool, run trials (parallel, per-trial seeded
// streams), and write the results CSV to <out_dir>/results.csv.
RunOutcome run_experiment(const ExperimentConfig& config);

// Aggregate a results CSV into the per-(method, epsilon) summary CSV.
void summarize_file(const std::string& results_csv,
                    const std::string& summary_csv);

// Generate and export the experiment's episodes as line-delimited fixtures.
void simulate_to_file(const ExperimentConfig& config, const std::string& path);

// Cross-fold train one quantile predictor per epsilon and save each as
// <out_dir>/quantile_model_eps<eps>.txt. Returns the saved paths.
std::vector<std::string> train_to_files(const ExperimentConfig& config);

// The k labels of largest probability, ties broken by label order.
PredictionSet top_k_baseline(const std::vector<double>& probs, int k);

// Labels in decreasing probability until cumulative mass exceeds 1 - epsilon
// (the crossing label included).
PredictionSet naive_baseline(const std::vector<double>& probs, double epsilon);

// 6-significant-digit decimal used throughout the CSVs.
std::string format_number(double v);

}  // namespace fscp
