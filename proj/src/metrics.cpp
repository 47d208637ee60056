#include "steinsim/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <vector>

#include "steinsim/errors.hpp"
#include "steinsim/likelihood.hpp"

namespace steinsim {

namespace {

constexpr double kDistFloor = 1e-12;

// distance from row i of `from` to the j-th nearest row of `to`,
// optionally skipping the row with the same index
double kth_neighbor_distance(const Eigen::MatrixXd& from, int i, const Eigen::MatrixXd& to,
                             int kth, bool skip_same_index, std::vector<double>& scratch) {
  scratch.clear();
  for (int j = 0; j < to.rows(); ++j) {
    if (skip_same_index && j == i) continue;
    scratch.push_back((to.row(j) - from.row(i)).norm());
  }
  if (kth > static_cast<int>(scratch.size()))
    throw ConfigError("not enough samples for the requested neighbor rank");
  std::nth_element(scratch.begin(), scratch.begin() + (kth - 1), scratch.end());
  return scratch[kth - 1];
}

}  // namespace

double digamma(double x) {
  if (!(x > 0.0)) throw ConfigError("digamma requires x > 0");
  double value = 0.0;
  while (x < 8.0) {
    value -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  value += std::log(x) - 0.5 * inv -
           inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 - inv2 / 240.0)));
  return value;
}

double knn_kl(const Eigen::MatrixXd& samples_p, const Eigen::MatrixXd& samples_q, int k, int l) {
  const int n = static_cast<int>(samples_p.rows());
  const int m = static_cast<int>(samples_q.rows());
  const int dim = static_cast<int>(samples_p.cols());
  if (k < 1 || l < 1) throw ConfigError("neighbor ranks must be positive");
  if (samples_q.cols() != dim) throw ConfigError("sample sets differ in dimension");
  if (n <= l) throw ConfigError("knn_kl needs more than l samples in P");
  if (m < k) throw ConfigError("knn_kl needs at least k samples in Q");

  std::vector<double> scratch;
  scratch.reserve(std::max(n, m));
  int floored = 0;
  double log_ratio_sum = 0.0;
  for (int i = 0; i < n; ++i) {
    double nu = kth_neighbor_distance(samples_p, i, samples_q, k, false, scratch);
    double rho = kth_neighbor_distance(samples_p, i, samples_p, l, true, scratch);
    if (nu < kDistFloor) {
      nu = kDistFloor;
      ++floored;
    }
    if (rho < kDistFloor) {
      rho = kDistFloor;
      ++floored;
    }
    log_ratio_sum += std::log(nu / rho);
  }
  if (floored > 0)
    std::cerr << "knn_kl: " << floored
              << " neighbor distances hit the 1e-12 floor (duplicate points)\n";
  return static_cast<double>(dim) / n * log_ratio_sum + digamma(l) - digamma(k) +
         std::log(static_cast<double>(m) / (n - 1));
}

double mmd(const Eigen::MatrixXd& samples_p, const Eigen::MatrixXd& samples_q) {
  const int n = static_cast<int>(samples_p.rows());
  const int m = static_cast<int>(samples_q.rows());
  if (n == 0 || m == 0) throw ConfigError("mmd requires nonempty sample sets");
  if (samples_p.cols() != samples_q.cols())
    throw ConfigError("sample sets differ in dimension");

  Eigen::MatrixXd pooled(n + m, samples_p.cols());
  pooled.topRows(n) = samples_p;
  pooled.bottomRows(m) = samples_q;
  std::vector<double> dists;
  dists.reserve(static_cast<size_t>(n + m) * (n + m - 1) / 2);
  for (int i = 0; i < pooled.rows(); ++i)
    for (int j = i + 1; j < pooled.rows(); ++j)
      dists.push_back((pooled.row(i) - pooled.row(j)).norm());
  double bandwidth = 1.0;
  if (!dists.empty()) {
    std::sort(dists.begin(), dists.end());
    const size_t mid = dists.size() / 2;
    const double med =
        dists.size() % 2 == 1 ? dists[mid] : 0.5 * (dists[mid - 1] + dists[mid]);
    bandwidth = std::max(med * med, kDistFloor);
  }

  // the three kernel sums are accumulated separately so identical inputs
  // cancel exactly
  const auto mean_kernel = [&](const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    double sum = 0.0;
    for (int i = 0; i < a.rows(); ++i)
      for (int j = 0; j < b.rows(); ++j)
        sum += std::exp(-(a.row(i) - b.row(j)).squaredNorm() / bandwidth);
    return sum / (static_cast<double>(a.rows()) * b.rows());
  };
  const double value = mean_kernel(samples_p, samples_p) + mean_kernel(samples_q, samples_q) -
                       2.0 * mean_kernel(samples_p, samples_q);
  return std::max(value, 0.0);
}

double trajectory_distance(const Trajectory& a, const Trajectory& b,
                           const Eigen::VectorXd& variances) {
  if (a.observations.cols() != b.observations.cols())
    throw ConfigError("trajectories differ in observation dimension");
  const int steps = static_cast<int>(std::min(a.observations.rows(), b.observations.rows()));
  if (steps < static_cast<int>(std::max(a.observations.rows(), b.observations.rows())))
    std::cerr << "trajectory_distance: length mismatch, truncating to " << steps << " steps\n";
  double sum = 0.0;
  for (int t = 0; t < steps; ++t) {
    const Eigen::VectorXd diff = normalize(a.observations.row(t).transpose(), variances) -
                                 normalize(b.observations.row(t).transpose(), variances);
    sum += diff.squaredNorm();
  }
  return std::sqrt(sum);
}

Eigen::MatrixXd trajectory_feature_matrix(const TrajectorySet& set,
                                          const Eigen::VectorXd& variances) {
  if (set.empty()) throw ConfigError("empty trajectory set");
  const int dim = static_cast<int>(set[0].observations.cols());
  long steps = set[0].observations.rows();
  for (const Trajectory& traj : set) {
    if (traj.observations.cols() != dim)
      throw ConfigError("trajectories differ in observation dimension");
    steps = std::min(steps, traj.observations.rows());
  }
  for (const Trajectory& traj : set)
    if (traj.observations.rows() != steps) {
      std::cerr << "trajectory_feature_matrix: length mismatch, truncating to " << steps
                << " steps\n";
      break;
    }

  Eigen::MatrixXd features(set.size(), steps * dim);
  for (size_t i = 0; i < set.size(); ++i)
    for (long t = 0; t < steps; ++t)
      features.row(i).segment(t * dim, dim) =
          normalize(set[i].observations.row(t).transpose(), variances).transpose();
  return features;
}

double posterior_log_likelihood(const Posterior& posterior, const TrajectorySet& set,
                                const PendulumModel& model, const LikelihoodConfig& cfg) {
  if (posterior.particles.empty()) throw ConfigError("empty posterior");
  if (set.empty()) throw ConfigError("empty trajectory set");
  LikelihoodConfig ss = resolve_likelihood(cfg, set);
  ss.num_shooting_windows = 1;
  ss.window_length = 0;

  const int num_particles = static_cast<int>(posterior.particles.size());
  double total = 0.0;
  long total_terms = 0;
  bool any_finite = false;
  Eigen::VectorXd lls(num_particles);
  for (const Trajectory& traj : set) {
    for (int i = 0; i < num_particles; ++i) {
      lls[i] = single_shooting_ll(traj, posterior.particles[i].theta, model, ss);
      if (lls[i] > kDivergedLogLik) any_finite = true;
    }
    total += log_sum_exp(lls) - std::log(static_cast<double>(num_particles));
    total_terms += traj.observations.rows() * traj.observations.cols();
  }
  if (!any_finite) throw NumericalError("all particle rollouts diverged");
  return total / static_cast<double>(total_terms);
}

MetricReport compute_metrics(const Posterior& posterior, const TrajectorySet& held_out,
                             const PendulumModel& model, const LikelihoodConfig& cfg) {
  if (posterior.particles.empty()) throw ConfigError("empty posterior");
  if (held_out.empty()) throw ConfigError("empty held-out set");
  const LikelihoodConfig lik = resolve_likelihood(cfg, held_out);

  const int num_particles = static_cast<int>(posterior.particles.size());
  const int num_refs = static_cast<int>(held_out.size());
  TrajectorySet sim;
  sim.reserve(num_particles);
  for (int i = 0; i < num_particles; ++i) {
    const Trajectory& ref = held_out[i % num_refs];
    PendulumModel local = model;
    local.dt = ref.dt;
    try {
      sim.push_back(rollout(local, posterior.particles[i].theta, ref.start_state,
                            static_cast<int>(ref.observations.rows())));
    } catch (const DivergenceError&) {
    }
  }
  if (static_cast<int>(sim.size()) < 4)
    throw NumericalError("too few non-diverged rollouts for trajectory metrics");

  Eigen::MatrixXd real_features = trajectory_feature_matrix(held_out, lik.normalization);
  Eigen::MatrixXd sim_features = trajectory_feature_matrix(sim, lik.normalization);
  const long cols = std::min(real_features.cols(), sim_features.cols());
  real_features = real_features.leftCols(cols).eval();
  sim_features = sim_features.leftCols(cols).eval();

  MetricReport report;
  report.kl_real_sim = knn_kl(real_features, sim_features);
  report.kl_sim_real = knn_kl(sim_features, real_features);
  report.mmd = mmd(real_features, sim_features);
  report.log_likelihood = posterior_log_likelihood(posterior, held_out, model, cfg);
  report.real_count = num_refs;
  report.sim_count = static_cast<int>(sim.size());
  return report;
}

}  // namespace steinsim
