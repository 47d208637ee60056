#include "steinsim/svgd.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "steinsim/sobol.hpp"
#include "steinsim/threading.hpp"

namespace steinsim {

namespace {

Eigen::VectorXd tile_state_variances(const Eigen::Vector4d& var, int copies) {
  Eigen::VectorXd out(4 * copies);
  for (int c = 0; c < copies; ++c) out.segment(4 * c, 4) = var;
  return out;
}

}  // namespace

Eigen::VectorXd flatten_shooting(const std::vector<std::vector<State>>& shoot) {
  int n = 0;
  for (const auto& traj : shoot) n += 4 * static_cast<int>(traj.size());
  Eigen::VectorXd flat(n);
  int at = 0;
  for (const auto& traj : shoot)
    for (const State& s : traj) {
      flat.segment(at, 4) = state_vector(s);
      at += 4;
    }
  return flat;
}

std::vector<std::vector<State>> unflatten_shooting(const Eigen::VectorXd& flat, int num_traj,
                                                   int boundaries) {
  std::vector<std::vector<State>> out(num_traj);
  int at = 0;
  for (int k = 0; k < num_traj; ++k) {
    out[k].resize(boundaries);
    for (int b = 0; b < boundaries; ++b) {
      out[k][b] = state_from_vector(flat.segment(at, 4));
      at += 4;
    }
  }
  return out;
}

Eigen::VectorXd adam_step(AdamState& state, const Eigen::VectorXd& x,
                          const Eigen::VectorXd& direction, double lr, double beta1, double beta2,
                          double eps) {
  if (state.m.size() != x.size()) {
    state.m = Eigen::VectorXd::Zero(x.size());
    state.v = Eigen::VectorXd::Zero(x.size());
    state.t = 0;
  }
  state.t += 1;
  state.m = beta1 * state.m + (1.0 - beta1) * direction;
  state.v = beta2 * state.v + (1.0 - beta2) * direction.cwiseProduct(direction);
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
  const Eigen::VectorXd mhat = state.m / c1;
  const Eigen::VectorXd vhat = state.v / c2;
  return x + lr * mhat.cwiseQuotient(vhat.cwiseSqrt() + Eigen::VectorXd::Constant(x.size(), eps));
}

std::pair<double, Eigen::VectorXd> rbf_kernel(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                                              double bandwidth) {
  if (x.size() != y.size()) throw ConfigError("kernel argument dimension mismatch");
  if (!(bandwidth > 0.0)) throw ConfigError("kernel bandwidth must be positive");
  const Eigen::VectorXd diff = x - y;
  const double k = std::exp(-diff.squaredNorm() / bandwidth);
  return {k, (-2.0 / bandwidth) * k * diff};
}

double median_bandwidth(const Eigen::MatrixXd& particles) {
  const int n = static_cast<int>(particles.rows());
  if (n < 2) throw ConfigError("median bandwidth needs at least two particles");
  std::vector<double> dists;
  dists.reserve(static_cast<size_t>(n) * (n - 1) / 2);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      dists.push_back((particles.row(i) - particles.row(j)).norm());
  std::sort(dists.begin(), dists.end());
  const size_t half = dists.size() / 2;
  const double med = dists.size() % 2 == 1 ? dists[half] : 0.5 * (dists[half - 1] + dists[half]);
  return std::max(med * med / std::log(static_cast<double>(n)), 1e-8);
}

Eigen::MatrixXd svgd_phi(const Eigen::MatrixXd& particles, const Eigen::MatrixXd& grads,
                         double bandwidth) {
  const int n = static_cast<int>(particles.rows());
  const int d = static_cast<int>(particles.cols());
  Eigen::MatrixXd phi = Eigen::MatrixXd::Zero(n, d);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(d);
    for (int j = 0; j < n; ++j) {
      const auto [k, grad_j_k] =
          rbf_kernel(particles.row(j).transpose(), particles.row(i).transpose(), bandwidth);
      acc += k * grads.row(j).transpose() + grad_j_k;
    }
    phi.row(i) = (inv_n * acc).transpose();
  }
  return phi;
}

Eigen::VectorXd flatten(const AugmentedParams& aug) {
  const Eigen::VectorXd shoot = flatten_shooting(aug.shooting_states);
  Eigen::VectorXd flat(aug.theta.size() + shoot.size() + aug.lambda_def.size() +
                       aug.lambda_lim.size());
  int at = 0;
  flat.segment(at, aug.theta.size()) = aug.theta;
  at += static_cast<int>(aug.theta.size());
  flat.segment(at, shoot.size()) = shoot;
  at += static_cast<int>(shoot.size());
  flat.segment(at, aug.lambda_def.size()) = aug.lambda_def;
  at += static_cast<int>(aug.lambda_def.size());
  flat.segment(at, aug.lambda_lim.size()) = aug.lambda_lim;
  return flat;
}

AugmentedParams unflatten(const Eigen::VectorXd& flat, int theta_dim, int num_trajectories,
                          int boundaries_per_trajectory) {
  const int shoot_n = 4 * num_trajectories * boundaries_per_trajectory;
  const int def_n = num_trajectories * boundaries_per_trajectory;
  if (flat.size() != theta_dim + shoot_n + def_n + theta_dim)
    throw ConfigError("flat vector length does not match augmented layout");
  AugmentedParams aug;
  int at = 0;
  aug.theta = flat.segment(at, theta_dim);
  at += theta_dim;
  aug.shooting_states =
      unflatten_shooting(flat.segment(at, shoot_n), num_trajectories, boundaries_per_trajectory);
  at += shoot_n;
  aug.lambda_def = flat.segment(at, def_n);
  at += def_n;
  aug.lambda_lim = flat.segment(at, theta_dim);
  return aug;
}

namespace {

struct RunContext {
  const TrajectorySet* set = nullptr;
  PendulumModel model;
  LikelihoodConfig lik;
  ParamLimits limits;
  Eigen::VectorXd span;       // limit widths per theta dim
  Eigen::Vector4d state_var;  // shooting normalization variances
  Eigen::VectorXd svar_tile;  // state_var tiled over all shooting slots
  int M = 0;
  int K = 0;
  int boundaries = 0;
  int shoot_dim = 0;
  double defect_ll_const = 0.0;  // additive constant of all defect densities
};

RunContext make_context(const TrajectorySet& set, const PendulumModel& model,
                        const LikelihoodConfig& lik) {
  validate(model);
  RunContext ctx;
  ctx.set = &set;
  ctx.model = model;
  ctx.lik = resolve_likelihood(lik, set);
  ctx.limits = param_limits(model);
  ctx.span = ctx.limits.max - ctx.limits.min;
  ctx.M = static_cast<int>(model.param_spec.size());
  ctx.K = static_cast<int>(set.size());
  ctx.boundaries = ctx.lik.num_shooting_windows - 1;
  ctx.shoot_dim = 4 * ctx.K * ctx.boundaries;
  if (ctx.boundaries > 0) {
    ctx.state_var = state_normalization(ctx.model, ctx.lik);
    ctx.svar_tile = tile_state_variances(ctx.state_var, ctx.K * ctx.boundaries);
    ctx.defect_ll_const = -0.5 * std::log(2.0 * std::numbers::pi * ctx.lik.sigma_def *
                                          ctx.lik.sigma_def) *
                          4.0 * ctx.K * ctx.boundaries;
  } else {
    ctx.state_var.setOnes();
    ctx.svar_tile.resize(0);
  }
  return ctx;
}

Eigen::VectorXd to_unit(const RunContext& ctx, const Eigen::VectorXd& theta) {
  return (theta - ctx.limits.min).cwiseQuotient(ctx.span);
}

Eigen::VectorXd from_unit(const RunContext& ctx, const Eigen::VectorXd& theta_n) {
  return ctx.limits.min + theta_n.cwiseProduct(ctx.span);
}

struct ParticleEval {
  SetEval eval;
  Eigen::VectorXd grad_theta_n;  // obs ll gradient in unit theta coords
  Eigen::VectorXd grad_shoot_n;  // obs ll gradient in normalized shooting coords
};

ParticleEval evaluate_particle(const RunContext& ctx, const Eigen::VectorXd& theta,
                               const std::vector<std::vector<State>>& shoot) {
  ParticleEval pe;
  pe.eval = set_eval(*ctx.set, theta, shoot, ctx.model, ctx.lik, true);
  pe.grad_theta_n = pe.eval.grad.head(ctx.M).cwiseProduct(ctx.span);
  if (ctx.shoot_dim > 0)
    pe.grad_shoot_n = pe.eval.grad.tail(ctx.shoot_dim).cwiseProduct(ctx.svar_tile);
  return pe;
}

std::vector<std::vector<State>> init_shooting(const RunContext& ctx) {
  std::vector<std::vector<State>> shoot;
  if (ctx.boundaries == 0) return shoot;
  shoot.reserve(ctx.K);
  for (const Trajectory& traj : *ctx.set)
    shoot.push_back(boundary_states_from(traj, ctx.model, ctx.lik));
  return shoot;
}

}  // namespace

Posterior svgd_run(const TrajectorySet& set, const PendulumModel& model,
                   const LikelihoodConfig& lik, const SvgdConfig& cfg) {
  if (cfg.num_particles < 1) throw ConfigError("need at least one particle");
  if (cfg.iterations < 0) throw ConfigError("iterations must be nonnegative");
  RunContext ctx = make_context(set, model, lik);
  const int N = cfg.num_particles;

  Eigen::MatrixXd theta = sobol_init(N, ctx.limits);
  std::vector<Eigen::VectorXd> shoot_n(N);
  std::vector<AdamState> adam_theta(N), adam_shoot(N);
  const std::vector<std::vector<State>> shoot0 = init_shooting(ctx);
  if (ctx.shoot_dim > 0) {
    const Eigen::VectorXd flat0 = flatten_shooting(shoot0);
    for (int i = 0; i < N; ++i) shoot_n[i] = flat0.cwiseQuotient(ctx.svar_tile);
  }

  Posterior post;
  post.mean_ll_trace.reserve(cfg.iterations);

  std::vector<ParticleEval> evals(N);
  for (int it = 0; it < cfg.iterations; ++it) {
    parallel_for(N, cfg.threads, [&](int i) {
      const std::vector<std::vector<State>> shoot =
          ctx.shoot_dim > 0
              ? unflatten_shooting(shoot_n[i].cwiseProduct(ctx.svar_tile), ctx.K, ctx.boundaries)
              : std::vector<std::vector<State>>{};
      evals[i] = evaluate_particle(ctx, theta.row(i).transpose(), shoot);
    });

    Eigen::MatrixXd theta_n(N, ctx.M);
    Eigen::MatrixXd grads_n(N, ctx.M);
    for (int i = 0; i < N; ++i) {
      theta_n.row(i) = to_unit(ctx, theta.row(i).transpose()).transpose();
      Eigen::VectorXd g = evals[i].grad_theta_n;
      if (ctx.shoot_dim > 0) {
        // unconstrained run treats defects as extra likelihood terms
        g -= (0.5 / (ctx.lik.sigma_def * ctx.lik.sigma_def)) *
             (evals[i].eval.defect_jac.leftCols(ctx.M).colwise().sum().transpose())
                 .cwiseProduct(ctx.span);
      }
      grads_n.row(i) = g.transpose();
    }

    const double bw = N >= 2 ? (cfg.kernel.bandwidth_rule == BandwidthRule::kMedian
                                    ? median_bandwidth(theta_n)
                                    : cfg.kernel.fixed_bandwidth)
                             : 1.0;
    const Eigen::MatrixXd phi = svgd_phi(theta_n, grads_n, bw);

    parallel_for(N, cfg.threads, [&](int i) {
      const Eigen::VectorXd next_n =
          adam_step(adam_theta[i], theta_n.row(i).transpose(), phi.row(i).transpose(), cfg.lr);
      theta.row(i) = from_unit(ctx, next_n).transpose();
      if (ctx.shoot_dim > 0) {
        Eigen::VectorXd gs = evals[i].grad_shoot_n;
        gs -= (0.5 / (ctx.lik.sigma_def * ctx.lik.sigma_def)) *
              (evals[i].eval.defect_jac.rightCols(ctx.shoot_dim).colwise().sum().transpose())
                  .cwiseProduct(ctx.svar_tile);
        shoot_n[i] = adam_step(adam_shoot[i], shoot_n[i], gs, cfg.lr);
      }
    });

    double mean_ll = 0.0;
    for (int i = 0; i < N; ++i) mean_ll += evals[i].eval.obs_ll;
    post.mean_ll_trace.push_back(mean_ll / N);
    if (cfg.record_iterates) post.theta_iterates.push_back(theta);
  }

  post.particles.resize(N);
  for (int i = 0; i < N; ++i) {
    AugmentedParams& aug = post.particles[i];
    aug.theta = theta.row(i).transpose();
    aug.shooting_states =
        ctx.shoot_dim > 0
            ? unflatten_shooting(shoot_n[i].cwiseProduct(ctx.svar_tile), ctx.K, ctx.boundaries)
            : std::vector<std::vector<State>>{};
    aug.lambda_def = Eigen::VectorXd::Zero(ctx.K * ctx.boundaries);
    aug.lambda_lim = Eigen::VectorXd::Zero(ctx.M);
  }
  fill_diagnostics(post, set, model, ctx.lik, cfg.threads);
  return post;
}

Posterior csvgd_run(const TrajectorySet& set, const PendulumModel& model,
                    const LikelihoodConfig& lik, const SvgdConfig& cfg, const MdmmConfig& mdmm) {
  if (lik.num_shooting_windows <= 1) return svgd_run(set, model, lik, cfg);
  if (cfg.num_particles < 1) throw ConfigError("need at least one particle");
  RunContext ctx = make_context(set, model, lik);
  const int N = cfg.num_particles;
  const int D = ctx.K * ctx.boundaries;  // defect constraint count
  const double inv_sd2 = 1.0 / (ctx.lik.sigma_def * ctx.lik.sigma_def);

  Eigen::MatrixXd theta = sobol_init(N, ctx.limits);
  std::vector<Eigen::VectorXd> shoot_n(N);
  std::vector<Eigen::VectorXd> lambda_def(N, Eigen::VectorXd::Zero(D));
  std::vector<Eigen::VectorXd> lambda_lim(N, Eigen::VectorXd::Zero(ctx.M));
  std::vector<AdamState> adam_theta(N), adam_shoot(N);
  {
    const Eigen::VectorXd flat0 = flatten_shooting(init_shooting(ctx));
    for (int i = 0; i < N; ++i) shoot_n[i] = flat0.cwiseQuotient(ctx.svar_tile);
  }

  Posterior post;
  post.mean_ll_trace.reserve(cfg.iterations);
  std::vector<ParticleEval> evals(N);

  for (int it = 0; it < cfg.iterations; ++it) {
    parallel_for(N, cfg.threads, [&](int i) {
      evals[i] = evaluate_particle(
          ctx, theta.row(i).transpose(),
          unflatten_shooting(shoot_n[i].cwiseProduct(ctx.svar_tile), ctx.K, ctx.boundaries));
    });

    Eigen::MatrixXd theta_n(N, ctx.M);
    Eigen::MatrixXd grads_n(N, ctx.M);
    for (int i = 0; i < N; ++i) {
      theta_n.row(i) = to_unit(ctx, theta.row(i).transpose()).transpose();
      grads_n.row(i) = evals[i].grad_theta_n.transpose();
    }
    const double bw = N >= 2 ? (cfg.kernel.bandwidth_rule == BandwidthRule::kMedian
                                    ? median_bandwidth(theta_n)
                                    : cfg.kernel.fixed_bandwidth)
                             : 1.0;
    const Eigen::MatrixXd phi = svgd_phi(theta_n, grads_n, bw);

    parallel_for(N, cfg.threads, [&](int i) {
      const Eigen::VectorXd tn = theta_n.row(i).transpose();
      const Eigen::VectorXd g_lim_n =
          tn.cwiseMax(0.0).cwiseMin(1.0) - tn;  // unit-box limit residual
      const Eigen::VectorXd g_def_vec = evals[i].eval.defects * inv_sd2;

      Eigen::VectorXd dir = phi.row(i).transpose();
      // -(lambda + c g) dg/dtheta with dg/dtheta = -1 outside the box
      for (int d = 0; d < ctx.M; ++d)
        if (g_lim_n[d] != 0.0) dir[d] += lambda_lim[i][d] + mdmm.damping_c * g_lim_n[d];
      Eigen::VectorXd shoot_dir = evals[i].grad_shoot_n;
      for (int b = 0; b < D; ++b) {
        const double w = lambda_def[i][b] + mdmm.damping_c * g_def_vec[b];
        dir -= w * inv_sd2 *
               evals[i].eval.defect_jac.row(b).head(ctx.M).transpose().cwiseProduct(ctx.span);
        shoot_dir -= w * inv_sd2 *
                     evals[i]
                         .eval.defect_jac.row(b)
                         .tail(ctx.shoot_dim)
                         .transpose()
                         .cwiseProduct(ctx.svar_tile);
      }

      const Eigen::VectorXd next_n = adam_step(adam_theta[i], tn, dir, cfg.lr);
      theta.row(i) = from_unit(ctx, next_n).transpose();
      shoot_n[i] = adam_step(adam_shoot[i], shoot_n[i], shoot_dir, mdmm.shooting_state_step);

      lambda_def[i] += mdmm.lambda_step * g_def_vec;
      lambda_lim[i] += mdmm.lambda_step * g_lim_n;
    });

    double mean_ll = 0.0;
    for (int i = 0; i < N; ++i) mean_ll += evals[i].eval.obs_ll;
    post.mean_ll_trace.push_back(mean_ll / N);
    if (cfg.record_iterates) post.theta_iterates.push_back(theta);
  }

  post.particles.resize(N);
  for (int i = 0; i < N; ++i) {
    AugmentedParams& aug = post.particles[i];
    // limits hold exactly at the end: the residual constraint clips
    aug.theta =
        theta.row(i).transpose().cwiseMax(ctx.limits.min).cwiseMin(ctx.limits.max);
    aug.shooting_states =
        unflatten_shooting(shoot_n[i].cwiseProduct(ctx.svar_tile), ctx.K, ctx.boundaries);
    aug.lambda_def = lambda_def[i];
    aug.lambda_lim = lambda_lim[i];
  }
  fill_diagnostics(post, set, model, ctx.lik, cfg.threads);
  return post;
}

}  // namespace steinsim
