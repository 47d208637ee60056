#pragma once

#include <Eigen/Dense>
#include <vector>

#include "steinsim/pendulum.hpp"

namespace steinsim {

// diverged rollouts report this instead of -inf so constraint and limit
// terms keep producing finite update directions
inline constexpr double kDivergedLogLik = -1e12;

enum class Combination { kSum, kProduct };

struct LikelihoodConfig {
  Eigen::VectorXd sigma_obs;      // per normalized observation dim; size 1 broadcasts
  double sigma_def = 0.1;
  int num_shooting_windows = 1;   // n_s
  int window_length = 0;          // steps per window; 0 means floor(T / n_s)
  Combination combination = Combination::kSum;
  Eigen::VectorXd normalization;  // per-dim observation variances
};

struct ParamLimits {
  Eigen::VectorXd min;
  Eigen::VectorXd max;
};

ParamLimits param_limits(const PendulumModel& model);

// Augmented particle: physical parameters plus one shooting-state sequence
// per reference trajectory and the constraint multipliers. lambda_def is
// trajectory-major over window boundaries.
struct AugmentedParams {
  Eigen::VectorXd theta;
  std::vector<std::vector<State>> shooting_states;
  Eigen::VectorXd lambda_def;
  Eigen::VectorXd lambda_lim;
};

int window_steps(const LikelihoodConfig& cfg, int T);
std::vector<int> window_starts(const LikelihoodConfig& cfg, int T);

// per-dim observation variances measured over the reference set, floored at 1e-8
Eigen::VectorXd estimate_normalization(const TrajectorySet& set);
Eigen::VectorXd sigma_obs_vector(const LikelihoodConfig& cfg, int obs_dim);
// copy of cfg with sigma_obs broadcast and normalization estimated when unset
LikelihoodConfig resolve_likelihood(const LikelihoodConfig& cfg, const TrajectorySet& set);
// state-space variances for defect scaling; requires full-state observation
Eigen::Vector4d state_normalization(const PendulumModel& model, const LikelihoodConfig& cfg);

Eigen::VectorXd normalize(const Eigen::VectorXd& w, const Eigen::VectorXd& variances);
Eigen::VectorXd denormalize(const Eigen::VectorXd& w, const Eigen::VectorXd& variances);

double step_log_likelihood(const Eigen::VectorXd& o_real, const Eigen::VectorXd& o_sim,
                           const Eigen::VectorXd& sigma_obs);
double defect_log_likelihood(const Eigen::VectorXd& s_shoot, const Eigen::VectorXd& s_sim,
                             double sigma_def);

double log_sum_exp(const Eigen::VectorXd& vals);

struct SsEval {
  double ll = kDivergedLogLik;
  bool diverged = false;
  Eigen::VectorXd grad_theta;  // physical parameter units; filled when requested
};

SsEval single_shooting_eval(const Trajectory& traj, const Eigen::VectorXd& theta,
                            const PendulumModel& model, const LikelihoodConfig& cfg,
                            bool want_grad);
double single_shooting_ll(const Trajectory& traj, const Eigen::VectorXd& theta,
                          const PendulumModel& model, const LikelihoodConfig& cfg);

// Multiple-shooting evaluation of one trajectory. Gradients are stacked over
// [theta, shooting states in time order], all in physical units. defects[b]
// is the squared normalized gap at boundary b; defect_jac rows follow b.
struct MsEval {
  double ll = kDivergedLogLik;
  bool diverged = false;
  Eigen::VectorXd defects;
  Eigen::VectorXd grad;
  Eigen::MatrixXd defect_jac;
};

MsEval multiple_shooting_eval(const Trajectory& traj, const Eigen::VectorXd& theta,
                              const std::vector<State>& shooting_states,
                              const PendulumModel& model, const LikelihoodConfig& cfg,
                              bool want_grad);

struct MsResult {
  double ll = kDivergedLogLik;
  Eigen::VectorXd defects;
};
MsResult multiple_shooting_ll(const Trajectory& traj, const AugmentedParams& aug,
                              const PendulumModel& model, const LikelihoodConfig& cfg,
                              int traj_index = 0);

// Combined observation term over a trajectory set with its gradient. The
// flat variable order is [theta, traj 0 shooting states, traj 1 ...]; defect
// rows are trajectory-major. Defect terms are not folded into obs_ll; the
// caller decides between constraint handling and defect likelihoods.
struct SetEval {
  double obs_ll = kDivergedLogLik;
  bool any_diverged = false;
  Eigen::VectorXd grad;
  Eigen::VectorXd defects;
  Eigen::MatrixXd defect_jac;
};

SetEval set_eval(const TrajectorySet& set, const Eigen::VectorXd& theta,
                 const std::vector<std::vector<State>>& shooting_states,
                 const PendulumModel& model, const LikelihoodConfig& cfg, bool want_grad);

double set_log_likelihood(const TrajectorySet& set, const Eigen::VectorXd& theta,
                          const PendulumModel& model, const LikelihoodConfig& cfg);
double set_log_likelihood(const TrajectorySet& set, const AugmentedParams& aug,
                          const PendulumModel& model, const LikelihoodConfig& cfg);

Eigen::VectorXd g_lim(const Eigen::VectorXd& theta, const ParamLimits& limits);
Eigen::VectorXd g_def_from_defects(const Eigen::VectorXd& defects, double sigma_def);
Eigen::VectorXd g_def(const TrajectorySet& set, const AugmentedParams& aug,
                      const PendulumModel& model, const LikelihoodConfig& cfg);
double uniform_log_prior(const Eigen::VectorXd& theta, const ParamLimits& limits);

// shooting states read off the reference trajectory at window boundaries
std::vector<State> boundary_states_from(const Trajectory& traj, const PendulumModel& model,
                                        const LikelihoodConfig& cfg);

}  // namespace steinsim
