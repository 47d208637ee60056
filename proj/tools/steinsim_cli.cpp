#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "steinsim/errors.hpp"
#include "steinsim/experiment.hpp"

namespace fs = std::filesystem;
using namespace steinsim;

namespace {

struct CommonOpts {
  std::string config;
  uint64_t seed = 0;
  int threads = 0;
  std::string out;
  bool has_seed = false;
  bool has_threads = false;
  bool has_out = false;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config, "experiment config (json)")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--seed", opts.seed, "override the config seed")
      ->each([&](const std::string&) { opts.has_seed = true; });
  cmd->add_option("--threads", opts.threads, "worker threads (0 = all cores)")
      ->each([&](const std::string&) { opts.has_threads = true; });
  cmd->add_option("--out", opts.out, "override the output directory")
      ->each([&](const std::string&) { opts.has_out = true; });
}

ExperimentConfig resolve(const CommonOpts& opts) {
  ExperimentConfig cfg = load_config(opts.config);
  if (opts.has_seed) cfg.seed = opts.seed;
  if (opts.has_threads) cfg.threads = opts.threads;
  if (opts.has_out) cfg.out_dir = opts.out;
  return cfg;
}

void run_simulate(const CommonOpts& opts) {
  const ExperimentConfig cfg = resolve(opts);
  const SyntheticData data = generate_synthetic(cfg, cfg.seed);
  fs::create_directories(cfg.out_dir);
  const fs::path out(cfg.out_dir);
  save_trajectories((out / "trajectories").string(), data.trajectories, cfg.model);

  std::ofstream truth((out / "ground_truth.csv").string());
  if (!truth) throw ConfigError("cannot write ground_truth.csv");
  for (size_t d = 0; d < cfg.model.param_spec.size(); ++d) {
    if (d) truth << ",";
    truth << cfg.model.param_spec[d].name;
  }
  truth << "\n";
  char buf[32];
  for (long r = 0; r < data.true_params.rows(); ++r) {
    for (long c = 0; c < data.true_params.cols(); ++c) {
      if (c) truth << ",";
      std::snprintf(buf, sizeof(buf), "%.17g", data.true_params(r, c));
      truth << buf;
    }
    truth << "\n";
  }
  std::ofstream resolved((out / "resolved_config.json").string());
  resolved << resolved_config_json(cfg);
  std::cout << "wrote " << data.trajectories.size() << " trajectories to "
            << (out / "trajectories").string() << "\n";
}

void run_estimate(const CommonOpts& opts) {
  const ExperimentConfig cfg = resolve(opts);
  const RunReport report = run_experiment(cfg);
  std::cout << "estimator " << cfg.estimator.method << " finished in "
            << report.wall_clock_seconds << " s, " << report.posterior.particles.size()
            << " particles\n";
  if (!report.mean_ll_trace.empty())
    std::cout << "final mean log-likelihood " << report.mean_ll_trace.back() << "\n";
  if (report.has_metrics)
    std::cout << "kl_real_sim " << report.metrics.kl_real_sim << ", kl_sim_real "
              << report.metrics.kl_sim_real << ", mmd " << report.metrics.mmd
              << ", log_likelihood " << report.metrics.log_likelihood << "\n";
  std::cout << "outputs in " << cfg.out_dir << "\n";
}

void run_metrics(const CommonOpts& opts) {
  const ExperimentConfig cfg = resolve(opts);
  if (cfg.test_path.empty()) throw ConfigError("metrics needs data.test in the config");
  const Posterior posterior =
      load_particles_csv((fs::path(cfg.out_dir) / "particles.csv").string(), cfg.model);
  TrajectorySet test = load_trajectories(cfg.test_path);
  align_observations(test, cfg.model);

  RunReport report;
  report.posterior = posterior;
  report.metrics = compute_metrics(posterior, test, cfg.model, cfg.likelihood);
  report.has_metrics = true;
  write_run_outputs(cfg, report);
  std::cout << "kl_real_sim " << report.metrics.kl_real_sim << "\n"
            << "kl_sim_real " << report.metrics.kl_sim_real << "\n"
            << "mmd " << report.metrics.mmd << "\n"
            << "log_likelihood " << report.metrics.log_likelihood << "\n";
}

void run_export(const CommonOpts& opts) {
  const ExperimentConfig cfg = resolve(opts);
  export_plot_data(cfg);
  std::cout << "plot data in " << (fs::path(cfg.out_dir) / "plots").string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"posterior inference over pendulum simulation parameters"};
  app.require_subcommand(1);

  CommonOpts sim_opts, est_opts, met_opts, exp_opts;
  CLI::App* sim = app.add_subcommand("simulate", "generate synthetic trajectories");
  add_common(sim, sim_opts);
  CLI::App* est = app.add_subcommand("estimate", "run the configured estimator");
  add_common(est, est_opts);
  CLI::App* met = app.add_subcommand("metrics", "score saved particles against a test set");
  add_common(met, met_opts);
  CLI::App* exp = app.add_subcommand("export", "write plot tables from saved outputs");
  add_common(exp, exp_opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (sim->parsed()) run_simulate(sim_opts);
    if (est->parsed()) run_estimate(est_opts);
    if (met->parsed()) run_metrics(met_opts);
    if (exp->parsed()) run_export(exp_opts);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
