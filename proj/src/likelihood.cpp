#include "steinsim/likelihood.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "steinsim/dual.hpp"

namespace steinsim {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// variables seen by one trajectory evaluation: theta then shooting states in
// time order, states flattened as [q0, q1, qd0, qd1]
int flat_dim(int theta_dim, int boundaries) { return theta_dim + 4 * boundaries; }

template <typename S>
struct WindowOut {
  StateT<S> end;
  S obs_ll{};
  int steps_done = 0;
  bool diverged = false;
};

// Rolls `steps` steps from x, scoring normalized residuals against obs rows
// [row0, row0+steps). On divergence the end state is the last finite one.
template <typename S>
WindowOut<S> roll_window(const ModelView<S>& view, const StateT<S>& start,
                         const PendulumModel& model, const Eigen::MatrixXd& obs_normalized,
                         int row0, int steps, const Eigen::VectorXd& inv_variance,
                         const Eigen::VectorXd& inv_sigma2) {
  WindowOut<S> out;
  out.end = start;
  StateT<S> x = start;
  const int obs_dim = static_cast<int>(model.observed_dims.size());
  for (int t = 0; t < steps; ++t) {
    x = step(view, x, {S(0.0), S(0.0)});
    for (int i = 0; i < 2; ++i) {
      const double qv = value_of(x.q[i]);
      const double qdv = value_of(x.qd[i]);
      if (!std::isfinite(qv) || !std::isfinite(qdv) || std::abs(qdv) > kMaxVelocity) {
        out.diverged = true;
        return out;
      }
    }
    for (int j = 0; j < obs_dim; ++j) {
      const int sd = model.observed_dims[j];
      const S& sim = sd < 2 ? x.q[sd] : x.qd[sd - 2];
      const S r = sim * inv_variance[j] - obs_normalized(row0 + t, j);
      out.obs_ll -= 0.5 * inv_sigma2[j] * (r * r);
    }
    out.end = x;
    out.steps_done = t + 1;
  }
  return out;
}

struct Scales {
  Eigen::VectorXd inv_variance;  // per obs dim, 1 / sigma^2_i
  Eigen::VectorXd inv_sigma2;    // per obs dim, 1 / sigma_obs^2
  double const_per_step = 0.0;   // sum of -0.5 log(2 pi sigma_obs^2)
};

Scales make_scales(const PendulumModel& model, const LikelihoodConfig& cfg) {
  const int obs_dim = static_cast<int>(model.observed_dims.size());
  Scales s;
  Eigen::VectorXd variance = cfg.normalization;
  if (variance.size() == 0) variance = Eigen::VectorXd::Ones(obs_dim);
  if (variance.size() != obs_dim)
    throw ConfigError("normalization length does not match observation dimension");
  if ((variance.array() <= 0.0).any()) throw ConfigError("normalization variances must be positive");
  const Eigen::VectorXd sigma = sigma_obs_vector(cfg, obs_dim);
  s.inv_variance = variance.cwiseInverse();
  s.inv_sigma2 = sigma.array().square().inverse().matrix();
  for (int j = 0; j < obs_dim; ++j) s.const_per_step -= 0.5 * std::log(kTwoPi * sigma[j] * sigma[j]);
  return s;
}

Eigen::MatrixXd normalized_observations(const Trajectory& traj, const Scales& scales) {
  return traj.observations * scales.inv_variance.asDiagonal();
}

}  // namespace

ParamLimits param_limits(const PendulumModel& model) {
  const int m = static_cast<int>(model.param_spec.size());
  ParamLimits lim;
  lim.min.resize(m);
  lim.max.resize(m);
  for (int i = 0; i < m; ++i) {
    lim.min[i] = model.param_spec[i].min;
    lim.max[i] = model.param_spec[i].max;
  }
  return lim;
}

int window_steps(const LikelihoodConfig& cfg, int T) {
  if (cfg.num_shooting_windows < 1) throw ConfigError("need at least one shooting window");
  if (cfg.num_shooting_windows > T)
    throw ConfigError("more shooting windows than trajectory steps");
  const int h = cfg.window_length > 0 ? cfg.window_length : T / cfg.num_shooting_windows;
  if (h < 1 || cfg.num_shooting_windows * h > T)
    throw ConfigError("window length inconsistent with trajectory length");
  return h;
}

std::vector<int> window_starts(const LikelihoodConfig& cfg, int T) {
  const int h = window_steps(cfg, T);
  std::vector<int> starts(cfg.num_shooting_windows);
  for (int w = 0; w < cfg.num_shooting_windows; ++w) starts[w] = w * h;
  return starts;
}

Eigen::VectorXd estimate_normalization(const TrajectorySet& set) {
  if (set.empty()) throw ConfigError("cannot estimate normalization from an empty set");
  const int d = static_cast<int>(set.front().observations.cols());
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd sumsq = Eigen::VectorXd::Zero(d);
  long count = 0;
  for (const Trajectory& traj : set) {
    if (traj.observations.cols() != d)
      throw ConfigError("inconsistent observation dimensions in trajectory set");
    sum += traj.observations.colwise().sum().transpose();
    sumsq += traj.observations.array().square().colwise().sum().matrix().transpose();
    count += traj.observations.rows();
  }
  Eigen::VectorXd mean = sum / static_cast<double>(count);
  Eigen::VectorXd var = sumsq / static_cast<double>(count) - mean.array().square().matrix();
  return var.cwiseMax(1e-8);
}

Eigen::VectorXd sigma_obs_vector(const LikelihoodConfig& cfg, int obs_dim) {
  if (cfg.sigma_obs.size() == 0) return Eigen::VectorXd::Constant(obs_dim, 0.1);
  if (cfg.sigma_obs.size() == 1) {
    if (!(cfg.sigma_obs[0] > 0.0)) throw ConfigError("sigma_obs must be positive");
    return Eigen::VectorXd::Constant(obs_dim, cfg.sigma_obs[0]);
  }
  if (cfg.sigma_obs.size() != obs_dim)
    throw ConfigError("sigma_obs length does not match observation dimension");
  if ((cfg.sigma_obs.array() <= 0.0).any()) throw ConfigError("sigma_obs must be positive");
  return cfg.sigma_obs;
}

LikelihoodConfig resolve_likelihood(const LikelihoodConfig& cfg, const TrajectorySet& set) {
  LikelihoodConfig out = cfg;
  if (set.empty()) throw ConfigError("empty trajectory set");
  const int obs_dim = static_cast<int>(set.front().observations.cols());
  out.sigma_obs = sigma_obs_vector(cfg, obs_dim);
  if (out.normalization.size() == 0) out.normalization = estimate_normalization(set);
  return out;
}

Eigen::Vector4d state_normalization(const PendulumModel& model, const LikelihoodConfig& cfg) {
  if (model.observed_dims.size() != 4)
    throw ConfigError("shooting windows require the full state to be observed");
  Eigen::Vector4d var = Eigen::Vector4d::Ones();
  if (cfg.normalization.size() != 0) {
    if (cfg.normalization.size() != 4)
      throw ConfigError("normalization length does not match observation dimension");
    for (int j = 0; j < 4; ++j) var[model.observed_dims[j]] = cfg.normalization[j];
  }
  return var;
}

Eigen::VectorXd normalize(const Eigen::VectorXd& w, const Eigen::VectorXd& variances) {
  if (w.size() != variances.size()) throw ConfigError("normalization dimension mismatch");
  if ((variances.array() <= 0.0).any()) throw ConfigError("variances must be positive");
  return w.cwiseQuotient(variances);
}

Eigen::VectorXd denormalize(const Eigen::VectorXd& w, const Eigen::VectorXd& variances) {
  if (w.size() != variances.size()) throw ConfigError("normalization dimension mismatch");
  return w.cwiseProduct(variances);
}

double step_log_likelihood(const Eigen::VectorXd& o_real, const Eigen::VectorXd& o_sim,
                           const Eigen::VectorXd& sigma_obs) {
  if (o_real.size() != o_sim.size() || o_real.size() != sigma_obs.size())
    throw ConfigError("observation dimension mismatch");
  double ll = 0.0;
  for (int j = 0; j < o_real.size(); ++j) {
    const double r = (o_real[j] - o_sim[j]) / sigma_obs[j];
    ll += -0.5 * r * r - 0.5 * std::log(kTwoPi * sigma_obs[j] * sigma_obs[j]);
  }
  return ll;
}

double defect_log_likelihood(const Eigen::VectorXd& s_shoot, const Eigen::VectorXd& s_sim,
                             double sigma_def) {
  if (s_shoot.size() != s_sim.size()) throw ConfigError("state dimension mismatch");
  double ll = 0.0;
  for (int j = 0; j < s_shoot.size(); ++j) {
    const double r = (s_shoot[j] - s_sim[j]) / sigma_def;
    ll += -0.5 * r * r - 0.5 * std::log(kTwoPi * sigma_def * sigma_def);
  }
  return ll;
}

double log_sum_exp(const Eigen::VectorXd& vals) {
  if (vals.size() == 0) throw ConfigError("log_sum_exp of empty vector");
  const double m = vals.maxCoeff();
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (int i = 0; i < vals.size(); ++i) s += std::exp(vals[i] - m);
  return m + std::log(s);
}

MsEval multiple_shooting_eval(const Trajectory& traj, const Eigen::VectorXd& theta,
                              const std::vector<State>& shooting_states,
                              const PendulumModel& model, const LikelihoodConfig& cfg,
                              bool want_grad) {
  const int T = static_cast<int>(traj.observations.rows());
  const int n_s = cfg.num_shooting_windows;
  const int h = window_steps(cfg, T);
  const int M = static_cast<int>(theta.size());
  const int boundaries = n_s - 1;
  if (static_cast<int>(shooting_states.size()) != boundaries)
    throw ConfigError("shooting state count does not match window count");
  if (static_cast<int>(model.param_spec.size()) != M)
    throw ConfigError("theta length does not match param_spec");

  const Scales scales = make_scales(model, cfg);
  const Eigen::MatrixXd obs_n = normalized_observations(traj, scales);
  Eigen::Vector4d inv_svar;
  if (boundaries > 0)
    inv_svar = state_normalization(model, cfg).cwiseInverse();

  const int nv = flat_dim(M, boundaries);
  MsEval out;
  out.defects = Eigen::VectorXd::Zero(boundaries);
  if (want_grad) {
    out.grad = Eigen::VectorXd::Zero(nv);
    out.defect_jac = Eigen::MatrixXd::Zero(boundaries, nv);
  }

  PendulumModel local = model;
  local.dt = traj.dt;

  double total_ll = 0.0;
  int total_steps = 0;
  bool diverged = false;

  // end-state sensitivity of the previous window, rows [q0 q1 qd0 qd1],
  // columns [theta, window start state]; start column block meaningful for
  // windows past the first
  for (int w = 0; w < n_s; ++w) {
    const int row0 = w * h;
    const int steps = (w == n_s - 1) ? T - row0 : h;
    const State start_d =
        w == 0 ? traj.start_state : shooting_states[w - 1];

    Eigen::Vector4d end_value;
    Eigen::MatrixXd end_jac;  // 4 x (M + 4)
    double win_ll = 0.0;
    Eigen::VectorXd win_grad;  // over (theta, start)
    bool win_diverged = false;
    int steps_done = 0;

    if (!want_grad) {
      const auto view = apply_params<double>(
          local, std::span<const double>(theta.data(), theta.size()));
      const auto res = roll_window(view, start_d, local, obs_n, row0, steps, scales.inv_variance,
                                   scales.inv_sigma2);
      win_ll = res.obs_ll;
      win_diverged = res.diverged;
      steps_done = res.steps_done;
      end_value = state_vector(res.end);
    } else {
      // chunked dual passes: start-state lanes ride along in every pass so
      // the end-state Jacobian is complete after the theta chunks
      const bool seed_start = w > 0;
      const int state_lanes = seed_start ? 4 : 0;
      const int chunk = kDualLanes - state_lanes;
      win_grad = Eigen::VectorXd::Zero(M + 4);
      end_jac = Eigen::MatrixXd::Zero(4, M + 4);
      for (int off = 0; off < M || off == 0; off += chunk) {
        const int nc = std::min(chunk, M - off);
        std::vector<Dual> th(M);
        for (int i = 0; i < M; ++i) th[i] = Dual(theta[i]);
        for (int i = 0; i < nc; ++i) th[off + i].d[i] = 1.0;
        StateT<Dual> start;
        for (int i = 0; i < 2; ++i) {
          start.q[i] = Dual(start_d.q[i]);
          start.qd[i] = Dual(start_d.qd[i]);
          if (seed_start) {
            start.q[i].d[nc + i] = 1.0;
            start.qd[i].d[nc + 2 + i] = 1.0;
          }
        }
        const auto view = apply_params<Dual>(local, std::span<const Dual>(th.data(), th.size()));
        const auto res = roll_window(view, start, local, obs_n, row0, steps, scales.inv_variance,
                                     scales.inv_sigma2);
        win_ll = res.obs_ll.v;
        win_diverged = res.diverged;
        steps_done = res.steps_done;
        const std::array<const Dual*, 4> end = {&res.end.q[0], &res.end.q[1], &res.end.qd[0],
                                                &res.end.qd[1]};
        for (int i = 0; i < 4; ++i) end_value[i] = end[i]->v;
        for (int c = 0; c < nc; ++c) {
          win_grad[off + c] = res.obs_ll.d[c];
          for (int i = 0; i < 4; ++i) end_jac(i, off + c) = end[i]->d[c];
        }
        if (seed_start) {
          for (int c = 0; c < 4; ++c) {
            win_grad[M + c] = res.obs_ll.d[nc + c];
            for (int i = 0; i < 4; ++i) end_jac(i, M + c) = end[i]->d[nc + c];
          }
        }
        if (M == 0) break;
      }
    }

    diverged = diverged || win_diverged;
    total_ll += win_ll;
    total_steps += steps_done;

    if (want_grad && !diverged) {
      for (int j = 0; j < M; ++j) out.grad[j] += win_grad[j];
      if (w > 0)
        for (int c = 0; c < 4; ++c) out.grad[M + 4 * (w - 1) + c] += win_grad[M + c];
    }

    // defect at the boundary this window feeds
    if (w < boundaries) {
      const Eigen::Vector4d next = state_vector(shooting_states[w]);
      const Eigen::Vector4d delta = (next - end_value).cwiseProduct(inv_svar);
      out.defects[w] = delta.squaredNorm();
      if (want_grad) {
        for (int i = 0; i < 4; ++i) {
          const double two_dn = 2.0 * delta[i] * inv_svar[i];
          out.defect_jac(w, M + 4 * w + i) += two_dn;
          for (int j = 0; j < M; ++j) out.defect_jac(w, j) -= two_dn * end_jac(i, j);
          if (w > 0)
            for (int c = 0; c < 4; ++c)
              out.defect_jac(w, M + 4 * (w - 1) + c) -= two_dn * end_jac(i, M + c);
        }
      }
    }
  }

  if (diverged) {
    out.ll = kDivergedLogLik;
    out.diverged = true;
    if (want_grad) out.grad.setZero();
  } else {
    out.ll = total_ll + total_steps * scales.const_per_step;
  }
  return out;
}

SsEval single_shooting_eval(const Trajectory& traj, const Eigen::VectorXd& theta,
                            const PendulumModel& model, const LikelihoodConfig& cfg,
                            bool want_grad) {
  LikelihoodConfig ss = cfg;
  ss.num_shooting_windows = 1;
  ss.window_length = 0;
  const MsEval ms = multiple_shooting_eval(traj, theta, {}, model, ss, want_grad);
  SsEval out;
  out.ll = ms.ll;
  out.diverged = ms.diverged;
  if (want_grad) out.grad_theta = ms.grad;
  return out;
}

double single_shooting_ll(const Trajectory& traj, const Eigen::VectorXd& theta,
                          const PendulumModel& model, const LikelihoodConfig& cfg) {
  return single_shooting_eval(traj, theta, model, cfg, false).ll;
}

MsResult multiple_shooting_ll(const Trajectory& traj, const AugmentedParams& aug,
                              const PendulumModel& model, const LikelihoodConfig& cfg,
                              int traj_index) {
  const std::vector<State>& shoot = cfg.num_shooting_windows > 1
                                         ? aug.shooting_states.at(traj_index)
                                         : std::vector<State>{};
  const MsEval ms = multiple_shooting_eval(traj, aug.theta, shoot, model, cfg, false);
  return {ms.ll, ms.defects};
}

SetEval set_eval(const TrajectorySet& set, const Eigen::VectorXd& theta,
                 const std::vector<std::vector<State>>& shooting_states,
                 const PendulumModel& model, const LikelihoodConfig& cfg, bool want_grad) {
  if (set.empty()) throw ConfigError("empty trajectory set");
  const int K = static_cast<int>(set.size());
  const int M = static_cast<int>(theta.size());
  const int boundaries = cfg.num_shooting_windows - 1;
  if (boundaries > 0 && static_cast<int>(shooting_states.size()) != K)
    throw ConfigError("need one shooting state sequence per trajectory");

  const int per_traj = 4 * boundaries;
  const int nv = M + K * per_traj;

  std::vector<MsEval> evals(K);
  for (int k = 0; k < K; ++k) {
    const std::vector<State>& shoot =
        boundaries > 0 ? shooting_states[k] : std::vector<State>{};
    evals[k] = multiple_shooting_eval(set[k], theta, shoot, model, cfg, want_grad);
  }

  SetEval out;
  out.defects = Eigen::VectorXd::Zero(K * boundaries);
  if (want_grad) {
    out.grad = Eigen::VectorXd::Zero(nv);
    out.defect_jac = Eigen::MatrixXd::Zero(K * boundaries, nv);
  }

  Eigen::VectorXd lls(K);
  for (int k = 0; k < K; ++k) {
    lls[k] = evals[k].ll;
    out.any_diverged = out.any_diverged || evals[k].diverged;
    out.defects.segment(k * boundaries, boundaries) = evals[k].defects;
    if (want_grad && boundaries > 0) {
      out.defect_jac.block(k * boundaries, 0, boundaries, M) =
          evals[k].defect_jac.leftCols(M);
      out.defect_jac.block(k * boundaries, M + k * per_traj, boundaries, per_traj) =
          evals[k].defect_jac.rightCols(per_traj);
    }
  }

  if (cfg.combination == Combination::kProduct) {
    out.obs_ll = lls.sum();
    if (want_grad) {
      for (int k = 0; k < K; ++k) {
        out.grad.head(M) += evals[k].grad.head(M);
        if (boundaries > 0)
          out.grad.segment(M + k * per_traj, per_traj) = evals[k].grad.tail(per_traj);
      }
    }
  } else {
    const double lse = log_sum_exp(lls);
    out.obs_ll = lse - std::log(static_cast<double>(K));
    if (want_grad) {
      for (int k = 0; k < K; ++k) {
        const double w = std::exp(lls[k] - lse);
        out.grad.head(M) += w * evals[k].grad.head(M);
        if (boundaries > 0)
          out.grad.segment(M + k * per_traj, per_traj) = w * evals[k].grad.tail(per_traj);
      }
    }
  }
  return out;
}

double set_log_likelihood(const TrajectorySet& set, const Eigen::VectorXd& theta,
                          const PendulumModel& model, const LikelihoodConfig& cfg) {
  LikelihoodConfig ss = cfg;
  ss.num_shooting_windows = 1;
  ss.window_length = 0;
  return set_eval(set, theta, {}, model, ss, false).obs_ll;
}

double set_log_likelihood(const TrajectorySet& set, const AugmentedParams& aug,
                          const PendulumModel& model, const LikelihoodConfig& cfg) {
  return set_eval(set, aug.theta, aug.shooting_states, model, cfg, false).obs_ll;
}

Eigen::VectorXd g_lim(const Eigen::VectorXd& theta, const ParamLimits& limits) {
  return theta.cwiseMax(limits.min).cwiseMin(limits.max) - theta;
}

Eigen::VectorXd g_def_from_defects(const Eigen::VectorXd& defects, double sigma_def) {
  if (!(sigma_def > 0.0)) throw ConfigError("sigma_def must be positive");
  return defects / (sigma_def * sigma_def);
}

Eigen::VectorXd g_def(const TrajectorySet& set, const AugmentedParams& aug,
                      const PendulumModel& model, const LikelihoodConfig& cfg) {
  const SetEval eval = set_eval(set, aug.theta, aug.shooting_states, model, cfg, false);
  return g_def_from_defects(eval.defects, cfg.sigma_def);
}

double uniform_log_prior(const Eigen::VectorXd& theta, const ParamLimits& limits) {
  double lp = 0.0;
  for (int i = 0; i < theta.size(); ++i) {
    if (theta[i] < limits.min[i] || theta[i] > limits.max[i])
      return -std::numeric_limits<double>::infinity();
    lp -= std::log(limits.max[i] - limits.min[i]);
  }
  return lp;
}

std::vector<State> boundary_states_from(const Trajectory& traj, const PendulumModel& model,
                                        const LikelihoodConfig& cfg) {
  const int T = static_cast<int>(traj.observations.rows());
  const int h = window_steps(cfg, T);
  std::vector<State> out;
  for (int w = 1; w < cfg.num_shooting_windows; ++w) {
    const int t = w * h;  // state index; observation row t-1
    out.push_back(state_from_observation(model, traj.observations.row(t - 1).transpose()));
  }
  return out;
}

}  // namespace steinsim
