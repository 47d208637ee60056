#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <utility>
#include <vector>

#include "steinsim/likelihood.hpp"
#include "steinsim/posterior.hpp"

namespace steinsim {

enum class BandwidthRule { kMedian, kFixed };

struct KernelConfig {
  BandwidthRule bandwidth_rule = BandwidthRule::kMedian;
  double fixed_bandwidth = 1.0;
};

struct MdmmConfig {
  double damping_c = 1.0;
  double lambda_step = 1e-2;
  double shooting_state_step = 1e-3;
};

struct SvgdConfig {
  int num_particles = 100;
  int iterations = 500;
  double lr = 5e-3;
  KernelConfig kernel;
  uint64_t seed = 0;
  int threads = 1;
  bool record_iterates = false;
};

struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  long t = 0;
};

// bias-corrected ascent step; returns x moved along direction
Eigen::VectorXd adam_step(AdamState& state, const Eigen::VectorXd& x,
                          const Eigen::VectorXd& direction, double lr, double beta1 = 0.9,
                          double beta2 = 0.999, double eps = 1e-8);

struct Particle {
  AugmentedParams augmented;
  AdamState adam_theta;
  AdamState adam_shoot;
  double last_ll = 0.0;
  Eigen::VectorXd last_defects;
};

std::pair<double, Eigen::VectorXd> rbf_kernel(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                                              double bandwidth);

// med^2 / log N over pairwise distances, floored at 1e-8; rows are particles
double median_bandwidth(const Eigen::MatrixXd& particles);

// Stein directions phi for every particle given per-particle gradients of the
// log posterior, all in the kernel's (normalized) coordinates; rows align
// with the particle rows.
Eigen::MatrixXd svgd_phi(const Eigen::MatrixXd& particles, const Eigen::MatrixXd& grads,
                         double bandwidth);

// flat layout: theta, shooting states in trajectory-major time order,
// lambda_def, lambda_lim
Eigen::VectorXd flatten(const AugmentedParams& aug);
AugmentedParams unflatten(const Eigen::VectorXd& flat, int theta_dim, int num_trajectories,
                          int boundaries_per_trajectory);

// shooting-state block alone, same ordering as flatten
Eigen::VectorXd flatten_shooting(const std::vector<std::vector<State>>& shooting_states);
std::vector<std::vector<State>> unflatten_shooting(const Eigen::VectorXd& flat,
                                                   int num_trajectories, int boundaries);

Posterior svgd_run(const TrajectorySet& set, const PendulumModel& model,
                   const LikelihoodConfig& lik, const SvgdConfig& cfg);

Posterior csvgd_run(const TrajectorySet& set, const PendulumModel& model,
                    const LikelihoodConfig& lik, const SvgdConfig& cfg, const MdmmConfig& mdmm);

}  // namespace steinsim
