#ifndef FSCP_H
#define FSCP_H

/* C interface to the conformal experiment library. All entry points return
 * an error code; 0 is success. The last error message is stored per process
 * and readable via fscp_last_error(). */

#ifdef __cplusplus
extern "C" {
#endif

#define FSCP_OK 0
#define FSCP_ERR_RUNTIME 1
#define FSCP_ERR_CONFIG 2
#define FSCP_ERR_INFEASIBLE 3

typedef struct fscp_config fscp_config;

/* Configuration handle, holding the defaults until keys are set. */
fscp_config* fscp_config_new(void);
void fscp_config_free(fscp_config* config);

/* Merge a key=value config file into the handle. */
int fscp_config_load(fscp_config* config, const char* path);

/* Set a single key (same keys as the config file). */
int fscp_config_set(fscp_config* config, const char* key, const char* value);

/* Run the full experiment; writes results.csv under the configured output
 * directory. Returns FSCP_ERR_INFEASIBLE when a (delta, epsilon) run was
 * requested and no epsilon admitted an adjusted level. */
int fscp_run(const fscp_config* config);

/* Train the per-epsilon quantile predictors and save them. */
int fscp_train(const fscp_config* config);

/* Export the experiment's sampled episodes as a line-delimited fixture. */
int fscp_simulate(const fscp_config* config, const char* out_path);

/* Aggregate a results CSV into the per-(method, epsilon) summary CSV. */
int fscp_summarize(const char* results_csv, const char* summary_csv);

/* Empirical beta-quantile of n scores (the ceil(beta*n)-th smallest), and
 * the inflated variant over the sample plus one +infinity point. */
int fscp_quantile(double beta, const double* scores, int n, double* out);
int fscp_inflated_quantile(double beta, const double* scores, int n,
                           double* out);

/* Message from the most recent failing call on this thread. */
const char* fscp_last_error(void);

#ifdef __cplusplus
}
#endif

#endif /* FSCP_H */
