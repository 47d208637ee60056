#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "steinsim/likelihood.hpp"
#include "steinsim/posterior.hpp"

namespace steinsim {

struct CemState {
  Eigen::VectorXd mean;
  Eigen::VectorXd diag_std;
  double elite_fraction = 0.125;
};

struct EnsembleState {
  Eigen::MatrixXd walkers;  // K x dim
  Eigen::VectorXd log_posteriors;
  uint64_t rng_seed = 0;
};

struct CemConfig {
  int population = 64;
  double elite_fraction = 0.125;
  int iterations = 50;
  uint64_t seed = 0;
  int threads = 1;
};

struct SgldConfig {
  int iterations = 10000;
  double step_eps = 1e-3;
  int posterior_samples = 100;
  uint64_t seed = 0;
  bool zero_noise = false;  // test hook: pure gradient ascent with step eps/2
};

struct StretchConfig {
  int walkers = 32;
  int iterations = 1000;  // full-ensemble sweeps
  double stretch_a = 2.0;
  int posterior_samples = 100;
  uint64_t seed = 0;
  int threads = 1;
};

// Generic cores over arbitrary log densities; the *_run wrappers plug in the
// trajectory posterior. Kept public so they can be exercised on analytic
// targets.

struct CemResult {
  CemState state;
  Eigen::MatrixXd population;  // final population, one sample per row
  Eigen::VectorXd scores;
  std::vector<double> mean_score_trace;
};

// lower/upper bound the sampling per dimension (use +-inf for unbounded)
CemResult cem_optimize(const std::function<double(const Eigen::VectorXd&)>& log_objective,
                       const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                       const Eigen::VectorXd& init_mean, const Eigen::VectorXd& init_std,
                       const CemConfig& cfg);

struct ChainResult {
  Eigen::MatrixXd samples;  // one row per recorded state
  Eigen::VectorXd log_posteriors;
  double acceptance_rate = 1.0;
};

// log_p_grad returns (log density, gradient); iterates reflect at the bounds
ChainResult sgld_sample(
    const std::function<std::pair<double, Eigen::VectorXd>(const Eigen::VectorXd&)>& log_p_grad,
    const Eigen::VectorXd& init, const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
    const SgldConfig& cfg);

// Goodman-Weare stretch move over a walker ensemble; samples are recorded
// per sweep, walker-major
ChainResult stretch_sample(const std::function<double(const Eigen::VectorXd&)>& log_p,
                           const Eigen::MatrixXd& init_walkers, const StretchConfig& cfg);

// All three honor the multiple-shooting setting of the likelihood config:
// shooting variables join the sampled space and the defect likelihood joins
// the log posterior.
Posterior cem_run(const TrajectorySet& set, const PendulumModel& model,
                  const LikelihoodConfig& lik, const CemConfig& cfg);

Posterior sgld_run(const TrajectorySet& set, const PendulumModel& model,
                   const LikelihoodConfig& lik, const SgldConfig& cfg);

Posterior stretch_move_run(const TrajectorySet& set, const PendulumModel& model,
                           const LikelihoodConfig& lik, const StretchConfig& cfg);

}  // namespace steinsim
