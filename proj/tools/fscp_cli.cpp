// Command-line front end; talks to the library through the C interface only.

#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fscp/fscp.h"

namespace {

struct ConfigDeleter {
  void operator()(fscp_config* c) const { fscp_config_free(c); }
};
using ConfigPtr = std::unique_ptr<fscp_config, ConfigDeleter>;

int fail(int code) {
  std::fprintf(stderr, "error: %s\n", fscp_last_error());
  return code;
}

// Shared configuration flags; overrides are applied after --config so the
// command line wins.
struct CommonOpts {
  std::string config_path;
  std::string seed;
  std::string epsilon;
  std::string delta;
  std::string method;
  std::string mode;
  std::string out_dir;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "key=value config file");
    cmd->add_option("--seed", seed, "master RNG seed");
    cmd->add_option("--epsilon", epsilon, "comma-separated target levels");
    cmd->add_option("--delta", delta, "confidence for the adjusted level");
    cmd->add_option("--method", method, "all | meta | full | baselines");
    cmd->add_option("--mode", mode, "marginal | conditional");
    cmd->add_option("--out", out_dir, "output directory");
  }

  int build(ConfigPtr* out) const {
    ConfigPtr cfg(fscp_config_new());
    if (!config_path.empty()) {
      int rc = fscp_config_load(cfg.get(), config_path.c_str());
      if (rc != FSCP_OK) return rc;
    }
    const std::pair<const char*, const std::string*> overrides[] = {
        {"seed", &seed},     {"epsilon", &epsilon}, {"delta", &delta},
        {"method", &method}, {"mode", &mode},       {"out", &out_dir},
    };
    for (const auto& [key, value] : overrides) {
      if (value->empty()) continue;
      int rc = fscp_config_set(cfg.get(), key, value->c_str());
      if (rc != FSCP_OK) return rc;
    }
    *out = std::move(cfg);
    return FSCP_OK;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Few-shot conformal prediction experiments"};
  app.require_subcommand(1);

  CommonOpts sim_opts, train_opts, run_opts;
  std::string sim_out = "episodes.csv";
  CLI::App* simulate = app.add_subcommand(
      "simulate", "Export the experiment's sampled episodes");
  sim_opts.attach(simulate);
  simulate->add_option("--episodes-out", sim_out, "fixture output path");

  CLI::App* train = app.add_subcommand(
      "train", "Fit and save the per-epsilon quantile predictors");
  train_opts.attach(train);

  CLI::App* run = app.add_subcommand("run", "Run the experiment end to end");
  run_opts.attach(run);

  std::string results_csv = "results.csv";
  std::string summary_csv = "summary.csv";
  CLI::App* summarize =
      app.add_subcommand("summarize", "Aggregate a results CSV");
  summarize->add_option("--results", results_csv, "input results CSV");
  summarize->add_option("--summary", summary_csv, "output summary CSV");

  CLI11_PARSE(app, argc, argv);

  int rc = FSCP_OK;
  if (simulate->parsed()) {
    ConfigPtr cfg;
    rc = sim_opts.build(&cfg);
    if (rc == FSCP_OK) rc = fscp_simulate(cfg.get(), sim_out.c_str());
  } else if (train->parsed()) {
    ConfigPtr cfg;
    rc = train_opts.build(&cfg);
    if (rc == FSCP_OK) rc = fscp_train(cfg.get());
  } else if (run->parsed()) {
    ConfigPtr cfg;
    rc = run_opts.build(&cfg);
    if (rc == FSCP_OK) rc = fscp_run(cfg.get());
  } else if (summarize->parsed()) {
    rc = fscp_summarize(results_csv.c_str(), summary_csv.c_str());
  }

  if (rc != FSCP_OK) return fail(rc);
  return 0;
}
