#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "steinsim/baselines.hpp"
#include "steinsim/likelihood.hpp"
#include "steinsim/metrics.hpp"
#include "steinsim/svgd.hpp"

namespace steinsim {

// ground-truth parameter distribution for synthetic data; zero covariance
// collapses to a point mass
struct SyntheticSpec {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  int num_trajectories = 10;
  int steps = 300;
  State start_state;
  double obs_noise = 0.0;
};

struct EstimatorConfig {
  std::string method = "csvgd";  // csvgd | svgd | cem | sgld | stretch
  SvgdConfig svgd;
  MdmmConfig mdmm;
  CemConfig cem;
  SgldConfig sgld;
  StretchConfig stretch;
};

struct ExperimentConfig {
  PendulumModel model;
  LikelihoodConfig likelihood;
  EstimatorConfig estimator;
  std::optional<SyntheticSpec> synthetic;
  std::string train_path;  // empty means generate from synthetic spec
  std::string test_path;   // held-out set for metrics, optional
  std::string out_dir = "out";
  uint64_t seed = 0;
  int threads = 1;
};

struct RunReport {
  MetricReport metrics;
  bool has_metrics = false;
  std::vector<double> mean_ll_trace;
  double wall_clock_seconds = 0.0;
  Posterior posterior;
};

ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);
std::string resolved_config_json(const ExperimentConfig& cfg);

Trajectory load_trajectory_csv(const std::string& path);
void save_trajectory_csv(const std::string& path, const Trajectory& traj,
                         const PendulumModel& model);
TrajectorySet load_trajectories(const std::string& dir_or_file);
void save_trajectories(const std::string& dir, const TrajectorySet& set,
                       const PendulumModel& model);
// project full-state files down to the model's observed dims
void align_observations(TrajectorySet& set, const PendulumModel& model);

struct SyntheticData {
  TrajectorySet trajectories;
  Eigen::MatrixXd true_params;  // one row per trajectory
};
SyntheticData generate_synthetic(const ExperimentConfig& cfg, uint64_t seed);

Posterior run_estimator(const TrajectorySet& train, const ExperimentConfig& cfg);
RunReport run_experiment(const ExperimentConfig& cfg);

void save_particles_csv(const std::string& path, const Posterior& posterior,
                        const PendulumModel& model);
Posterior load_particles_csv(const std::string& path, const PendulumModel& model);
void write_run_outputs(const ExperimentConfig& cfg, const RunReport& report);
void export_plot_data(const ExperimentConfig& cfg);

}  // namespace steinsim
