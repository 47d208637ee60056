#pragma once

#include <Eigen/Dense>

#include "steinsim/pendulum.hpp"
#include "steinsim/posterior.hpp"

namespace steinsim {

struct MetricReport {
  double kl_real_sim = 0.0;
  double kl_sim_real = 0.0;
  double mmd = 0.0;
  double log_likelihood = 0.0;
  int real_count = 0;
  int sim_count = 0;
};

// digamma via upward recurrence into the asymptotic series; |error| < 1e-10
double digamma(double x);

// KNN estimate of D_KL(P || Q) from samples (rows). Cross distances to Q use
// the k-th neighbor, within-P distances (self excluded) the l-th.
double knn_kl(const Eigen::MatrixXd& samples_p, const Eigen::MatrixXd& samples_q, int k = 3,
              int l = 3);

// squared MMD, biased V-statistic, RBF kernel with pooled median bandwidth
double mmd(const Eigen::MatrixXd& samples_p, const Eigen::MatrixXd& samples_q);

// Euclidean distance between flattened normalized observation sequences
double trajectory_distance(const Trajectory& a, const Trajectory& b,
                           const Eigen::VectorXd& variances);

// rows are flattened normalized trajectories, ready for knn_kl / mmd
Eigen::MatrixXd trajectory_feature_matrix(const TrajectorySet& set,
                                          const Eigen::VectorXd& variances);

// mixture log-likelihood of the reference set under the particle rollouts,
// normalized per step and dimension
double posterior_log_likelihood(const Posterior& posterior, const TrajectorySet& set,
                                const PendulumModel& model, const LikelihoodConfig& cfg);

// trajectory-space metrics of particle rollouts against a held-out set
MetricReport compute_metrics(const Posterior& posterior, const TrajectorySet& held_out,
                             const PendulumModel& model, const LikelihoodConfig& cfg);

}  // namespace steinsim
