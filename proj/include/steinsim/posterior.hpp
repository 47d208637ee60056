#pragma once

#include <Eigen/Dense>
#include <vector>

#include "steinsim/likelihood.hpp"

namespace steinsim {

// Result of any estimator: N particles over the augmented parameter space
// with final diagnostics and the per-iteration mean log-likelihood trace.
struct Posterior {
  std::vector<AugmentedParams> particles;
  Eigen::VectorXd log_likelihoods;
  Eigen::VectorXd max_defect_norms;    // zero when run without shooting windows
  std::vector<double> mean_ll_trace;
  std::vector<int> out_of_bounds;      // particle indices outside the limits
  std::vector<Eigen::MatrixXd> theta_iterates;  // filled only when recording
};

// particle parameter vectors stacked as rows
Eigen::MatrixXd particle_matrix(const Posterior& p);

// Recomputes per-particle log-likelihoods, max defect norms, and the
// out-of-bounds list against the given set. Throws when every particle's
// rollout diverged.
void fill_diagnostics(Posterior& post, const TrajectorySet& set, const PendulumModel& model,
                      const LikelihoodConfig& lik, int threads);

}  // namespace steinsim
