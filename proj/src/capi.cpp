#include "fscp/fscp.h"

#include <string>
#include <vector>

#include "fscp/core.hpp"
#include "fscp/errors.hpp"
#include "fscp/harness.hpp"

struct fscp_config {
  fscp::ExperimentConfig cfg;
};

namespace {

thread_local std::string g_last_error;

template <class Fn>
int guarded(const Fn& fn) {
  try {
    return fn();
  } catch (const fscp::ConfigError& e) {
    g_last_error = e.what();
    return FSCP_ERR_CONFIG;
  } catch (const fscp::InfeasibleError& e) {
    g_last_error = e.what();
    return FSCP_ERR_INFEASIBLE;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return FSCP_ERR_RUNTIME;
  }
}

}  // namespace

extern "C" {

fscp_config* fscp_config_new(void) { return new fscp_config(); }

void fscp_config_free(fscp_config* config) { delete config; }

int fscp_config_load(fscp_config* config, const char* path) {
  if (!config || !path) {
    g_last_error = "null argument";
    return FSCP_ERR_CONFIG;
  }
  return guarded([&] {
    for (const auto& [key, value] :
         fscp::ExperimentConfig::load_key_values(path)) {
      config->cfg.apply(key, value);
    }
    return FSCP_OK;
  });
}

int fscp_config_set(fscp_config* config, const char* key, const char* value) {
  if (!config || !key || !value) {
    g_last_error = "null argument";
    return FSCP_ERR_CONFIG;
  }
  return guarded([&] {
    config->cfg.apply(key, value);
    return FSCP_OK;
  });
}

int fscp_run(const fscp_config* config) {
  if (!config) {
    g_last_error = "null config";
    return FSCP_ERR_CONFIG;
  }
  return guarded([&] {
    fscp::RunOutcome outcome = fscp::run_experiment(config->cfg);
    if (outcome.delta_requested && outcome.all_delta_infeasible) {
      g_last_error = "no epsilon admitted a (delta, epsilon) adjustment";
      return FSCP_ERR_INFEASIBLE;
    }
    return FSCP_OK;
  });
}

int fscp_train(const fscp_config* config) {
  if (!config) {
    g_last_error = "null config";
    return FSCP_ERR_CONFIG;
  }
  return guarded([&] {
    fscp::train_to_files(config->cfg);
    return FSCP_OK;
  });
}

int fscp_simulate(const fscp_config* config, const char* out_path) {
  if (!config || !out_path) {
    g_last_error = "null argument";
    return FSCP_ERR_CONFIG;
  }
  return guarded([&] {
    fscp::simulate_to_file(config->cfg, out_path);
    return FSCP_OK;
  });
}

int fscp_summarize(const char* results_csv, const char* summary_csv) {
  if (!results_csv || !summary_csv) {
    g_last_error = "null argument";
    return FSCP_ERR_CONFIG;
  }
  return guarded([&] {
    fscp::summarize_file(results_csv, summary_csv);
    return FSCP_OK;
  });
}

int fscp_quantile(double beta, const double* scores, int n, double* out) {
  if (!scores || !out || n < 1) {
    g_last_error = "null or empty score array";
    return FSCP_ERR_CONFIG;
  }
  return guarded([&] {
    *out = fscp::quantile(beta,
                          fscp::ScoreSample({scores, scores + n}));
    return FSCP_OK;
  });
}

int fscp_inflated_quantile(double beta, const double* scores, int n,
                           double* out) {
  if (!scores || !out || n < 1) {
    g_last_error = "null or empty score array";
    return FSCP_ERR_CONFIG;
  }
  return guarded([&] {
    *out = fscp::inflated_quantile(beta,
                                   fscp::ScoreSample({scores, scores + n}));
    return FSCP_OK;
  });
}

const char* fscp_last_error(void) { return g_last_error.c_str(); }

}  // extern "C"
