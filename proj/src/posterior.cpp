#include "steinsim/posterior.hpp"

#include <algorithm>
#include <cmath>

#include "steinsim/threading.hpp"

namespace steinsim {

Eigen::MatrixXd particle_matrix(const Posterior& p) {
  if (p.particles.empty()) return {};
  const int n = static_cast<int>(p.particles.size());
  const int m = static_cast<int>(p.particles.front().theta.size());
  Eigen::MatrixXd out(n, m);
  for (int i = 0; i < n; ++i) out.row(i) = p.particles[i].theta.transpose();
  return out;
}

void fill_diagnostics(Posterior& post, const TrajectorySet& set, const PendulumModel& model,
                      const LikelihoodConfig& lik, int threads) {
  const int n = static_cast<int>(post.particles.size());
  const LikelihoodConfig cfg = resolve_likelihood(lik, set);
  const ParamLimits limits = param_limits(model);
  post.log_likelihoods.resize(n);
  post.max_defect_norms = Eigen::VectorXd::Zero(n);
  std::vector<char> diverged(n, 0);
  parallel_for(n, threads, [&](int i) {
    const AugmentedParams& aug = post.particles[i];
    const SetEval ev = set_eval(set, aug.theta, aug.shooting_states, model, cfg, false);
    post.log_likelihoods[i] = ev.obs_ll;
    if (ev.defects.size() > 0) post.max_defect_norms[i] = std::sqrt(ev.defects.maxCoeff());
    diverged[i] = ev.any_diverged ? 1 : 0;
  });
  post.out_of_bounds.clear();
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd& th = post.particles[i].theta;
    if ((th.array() < limits.min.array()).any() || (th.array() > limits.max.array()).any())
      post.out_of_bounds.push_back(i);
  }
  if (n > 0 && std::all_of(diverged.begin(), diverged.end(), [](char d) { return d != 0; }))
    throw NumericalError("all particles diverged");
}

}  // namespace steinsim
