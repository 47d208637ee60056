#include "steinsim/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <vector>

#include "steinsim/errors.hpp"
#include "steinsim/sobol.hpp"
#include "steinsim/svgd.hpp"
#include "steinsim/threading.hpp"

namespace steinsim {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Shared sampling space for the *_run wrappers: parameters mapped to the
// unit box, shooting states divided by the state variances and unbounded.
struct SampleSpace {
  const TrajectorySet* set = nullptr;
  const PendulumModel* model = nullptr;
  LikelihoodConfig lik;
  ParamLimits limits;
  Eigen::VectorXd span;
  Eigen::VectorXd svar_tile;  // state variances tiled over all boundaries
  int M = 0;
  int K = 0;
  int boundaries = 0;
  int shoot_dim = 0;
  int dim = 0;
  double prior_inside = 0.0;
  double defect_const = 0.0;  // normalization of the defect likelihood terms
};

SampleSpace make_space(const TrajectorySet& set, const PendulumModel& model,
                       const LikelihoodConfig& lik) {
  validate(model);
  if (set.empty()) throw ConfigError("empty trajectory set");
  SampleSpace sp;
  sp.set = &set;
  sp.model = &model;
  sp.lik = resolve_likelihood(lik, set);
  sp.limits = param_limits(model);
  sp.span = sp.limits.max - sp.limits.min;
  sp.M = static_cast<int>(sp.limits.min.size());
  sp.K = static_cast<int>(set.size());
  sp.boundaries = std::max(0, sp.lik.num_shooting_windows - 1);
  sp.shoot_dim = 4 * sp.K * sp.boundaries;
  sp.dim = sp.M + sp.shoot_dim;
  if (sp.boundaries > 0) {
    const Eigen::Vector4d svar = state_normalization(model, sp.lik);
    sp.svar_tile.resize(sp.shoot_dim);
    for (int c = 0; c < sp.K * sp.boundaries; ++c) sp.svar_tile.segment(4 * c, 4) = svar;
    const double s2 = sp.lik.sigma_def * sp.lik.sigma_def;
    sp.defect_const = static_cast<double>(sp.K * sp.boundaries) * 4.0 *
                      (-0.5 * std::log(2.0 * std::numbers::pi * s2));
  }
  for (int d = 0; d < sp.M; ++d) sp.prior_inside -= std::log(sp.span[d]);
  return sp;
}

Eigen::VectorXd theta_of(const SampleSpace& sp, const Eigen::VectorXd& v) {
  return sp.limits.min + v.head(sp.M).cwiseProduct(sp.span);
}

std::vector<std::vector<State>> shoot_of(const SampleSpace& sp, const Eigen::VectorXd& v) {
  if (sp.boundaries == 0) return std::vector<std::vector<State>>(sp.K);
  return unflatten_shooting(v.tail(sp.shoot_dim).cwiseProduct(sp.svar_tile), sp.K, sp.boundaries);
}

// mid-trajectory states read off each reference, expressed in sampling coords
Eigen::VectorXd initial_point(const SampleSpace& sp) {
  Eigen::VectorXd v = Eigen::VectorXd::Constant(sp.dim, 0.5);
  if (sp.boundaries > 0) {
    std::vector<std::vector<State>> shoot(sp.K);
    for (int k = 0; k < sp.K; ++k)
      shoot[k] = boundary_states_from((*sp.set)[k], *sp.model, sp.lik);
    v.tail(sp.shoot_dim) = flatten_shooting(shoot).cwiseQuotient(sp.svar_tile);
  }
  return v;
}

struct SpaceEval {
  double logp = -kInf;
  Eigen::VectorXd grad;
};

SpaceEval eval_space(const SampleSpace& sp, const Eigen::VectorXd& v, bool want_grad) {
  SpaceEval out;
  if (want_grad) out.grad = Eigen::VectorXd::Zero(sp.dim);
  for (int d = 0; d < sp.M; ++d)
    if (v[d] < 0.0 || v[d] > 1.0) return out;
  const Eigen::VectorXd theta = theta_of(sp, v);
  const std::vector<std::vector<State>> shoot = shoot_of(sp, v);
  const SetEval ev = set_eval(*sp.set, theta, shoot, *sp.model, sp.lik, want_grad);
  out.logp = ev.obs_ll + sp.prior_inside;
  if (sp.boundaries > 0) {
    const double s2 = sp.lik.sigma_def * sp.lik.sigma_def;
    out.logp += -0.5 * ev.defects.sum() / s2 + sp.defect_const;
  }
  if (want_grad) {
    out.grad.head(sp.M) = ev.grad.head(sp.M).cwiseProduct(sp.span);
    if (sp.shoot_dim > 0)
      out.grad.tail(sp.shoot_dim) = ev.grad.tail(sp.shoot_dim).cwiseProduct(sp.svar_tile);
    if (sp.boundaries > 0) {
      const double s2 = sp.lik.sigma_def * sp.lik.sigma_def;
      const Eigen::VectorXd jac_sum = ev.defect_jac.colwise().sum();
      out.grad.head(sp.M) -= 0.5 / s2 * jac_sum.head(sp.M).cwiseProduct(sp.span);
      out.grad.tail(sp.shoot_dim) -=
          0.5 / s2 * jac_sum.tail(sp.shoot_dim).cwiseProduct(sp.svar_tile);
    }
  }
  return out;
}

Posterior posterior_from_rows(const SampleSpace& sp, const Eigen::MatrixXd& rows,
                              std::vector<double> trace, int threads) {
  Posterior post;
  post.particles.resize(rows.rows());
  for (int i = 0; i < rows.rows(); ++i) {
    AugmentedParams& p = post.particles[i];
    p.theta = theta_of(sp, rows.row(i).transpose());
    p.shooting_states = shoot_of(sp, rows.row(i).transpose());
    p.lambda_def = Eigen::VectorXd::Zero(sp.K * sp.boundaries);
    p.lambda_lim = Eigen::VectorXd::Zero(sp.M);
  }
  post.mean_ll_trace = std::move(trace);
  fill_diagnostics(post, *sp.set, *sp.model, sp.lik, threads);
  return post;
}

}  // namespace

CemResult cem_optimize(const std::function<double(const Eigen::VectorXd&)>& log_objective,
                       const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                       const Eigen::VectorXd& init_mean, const Eigen::VectorXd& init_std,
                       const CemConfig& cfg) {
  const int dim = static_cast<int>(init_mean.size());
  if (dim <= 0) throw ConfigError("cem needs at least one dimension");
  if (cfg.population < 4) throw ConfigError("cem population must be at least 4");
  if (cfg.iterations < 1) throw ConfigError("cem iterations must be positive");
  if (!(cfg.elite_fraction > 0.0) || cfg.elite_fraction > 1.0)
    throw ConfigError("elite_fraction must lie in (0, 1]");
  int n_elite = static_cast<int>(std::round(cfg.elite_fraction * cfg.population));
  n_elite = std::clamp(n_elite, 2, cfg.population);

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  CemResult out;
  out.state.mean = init_mean;
  out.state.diag_std = init_std;
  out.state.elite_fraction = cfg.elite_fraction;
  Eigen::MatrixXd pop(cfg.population, dim);
  Eigen::VectorXd scores(cfg.population);

  for (int iter = 0; iter < cfg.iterations; ++iter) {
    // sample sequentially so the draw order is independent of threading
    for (int p = 0; p < cfg.population; ++p)
      for (int d = 0; d < dim; ++d) {
        double x = 0.0;
        for (int tries = 0; tries < 100; ++tries) {
          x = out.state.mean[d] + out.state.diag_std[d] * normal(rng);
          if (x >= lower[d] && x <= upper[d]) break;
        }
        pop(p, d) = std::clamp(x, lower[d], upper[d]);
      }
    parallel_for(cfg.population, cfg.threads, [&](int p) {
      const double s = log_objective(pop.row(p).transpose());
      scores[p] = std::isnan(s) ? -kInf : s;
    });

    std::vector<int> order(cfg.population);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return scores[a] > scores[b]; });

    Eigen::MatrixXd elites(n_elite, dim);
    for (int e = 0; e < n_elite; ++e) elites.row(e) = pop.row(order[e]);
    out.state.mean = elites.colwise().mean().transpose();
    for (int d = 0; d < dim; ++d) {
      const double var =
          (elites.col(d).array() - out.state.mean[d]).square().sum() / n_elite;
      out.state.diag_std[d] = std::max(std::sqrt(var), 1e-6);
    }
    out.mean_score_trace.push_back(scores.mean());
  }
  out.population = pop;
  out.scores = scores;
  return out;
}

ChainResult sgld_sample(
    const std::function<std::pair<double, Eigen::VectorXd>(const Eigen::VectorXd&)>& log_p_grad,
    const Eigen::VectorXd& init, const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
    const SgldConfig& cfg) {
  const int dim = static_cast<int>(init.size());
  if (cfg.iterations < 1) throw ConfigError("sgld iterations must be positive");
  if (!(cfg.step_eps > 0.0)) throw ConfigError("sgld step size must be positive");

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double noise_std = std::sqrt(cfg.step_eps);

  ChainResult out;
  out.samples.resize(cfg.iterations, dim);
  out.log_posteriors.resize(cfg.iterations);
  Eigen::VectorXd x = init;
  for (int it = 0; it < cfg.iterations; ++it) {
    const auto [lp, grad] = log_p_grad(x);
    Eigen::VectorXd next = x + 0.5 * cfg.step_eps * grad;
    for (int d = 0; d < dim; ++d) {
      const double z = normal(rng);
      if (!cfg.zero_noise) next[d] += noise_std * z;
    }
    for (int d = 0; d < dim; ++d) {
      for (int bounce = 0; bounce < 64 && (next[d] < lower[d] || next[d] > upper[d]); ++bounce) {
        if (next[d] < lower[d]) next[d] = 2.0 * lower[d] - next[d];
        else next[d] = 2.0 * upper[d] - next[d];
      }
      next[d] = std::clamp(next[d], lower[d], upper[d]);
    }
    x = next;
    out.samples.row(it) = x.transpose();
    out.log_posteriors[it] = lp;
  }
  out.acceptance_rate = 1.0;
  return out;
}

ChainResult stretch_sample(const std::function<double(const Eigen::VectorXd&)>& log_p,
                           const Eigen::MatrixXd& init_walkers, const StretchConfig& cfg) {
  const int K = static_cast<int>(init_walkers.rows());
  const int dim = static_cast<int>(init_walkers.cols());
  if (K < 4 || K % 2 != 0) throw ConfigError("walker count must be even and at least 4");
  if (dim < 1) throw ConfigError("stretch move needs at least one dimension");
  if (!(cfg.stretch_a > 1.0)) throw ConfigError("stretch_a must exceed 1");
  if (cfg.iterations < 1) throw ConfigError("stretch iterations must be positive");

  Eigen::MatrixXd walkers = init_walkers;
  Eigen::VectorXd lp(K);
  parallel_for(K, cfg.threads, [&](int k) { lp[k] = log_p(walkers.row(k).transpose()); });
  if ((lp.array() == -kInf).all())
    throw NumericalError("all stretch walkers start at zero posterior density");

  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const int half = K / 2;

  ChainResult out;
  out.samples.resize(static_cast<long>(cfg.iterations) * K, dim);
  out.log_posteriors.resize(static_cast<long>(cfg.iterations) * K);
  long accepted = 0;
  long proposed = 0;

  std::vector<int> partner(half);
  std::vector<double> zs(half), us(half);
  Eigen::MatrixXd proposals(half, dim);
  Eigen::VectorXd prop_lp(half);

  for (int sweep = 0; sweep < cfg.iterations; ++sweep) {
    for (int side = 0; side < 2; ++side) {
      const int base = side * half;
      const int other = (1 - side) * half;
      // draw all randomness up front; evaluation order is then free
      for (int i = 0; i < half; ++i) {
        partner[i] = other + static_cast<int>(rng() % static_cast<uint64_t>(half));
        const double u = u01(rng);
        const double s = (cfg.stretch_a - 1.0) * u + 1.0;
        zs[i] = s * s / cfg.stretch_a;
        us[i] = u01(rng);
      }
      for (int i = 0; i < half; ++i)
        proposals.row(i) = walkers.row(partner[i]) +
                           zs[i] * (walkers.row(base + i) - walkers.row(partner[i]));
      parallel_for(half, cfg.threads,
                   [&](int i) { prop_lp[i] = log_p(proposals.row(i).transpose()); });
      for (int i = 0; i < half; ++i) {
        const int k = base + i;
        const double log_accept = (dim - 1) * std::log(zs[i]) + prop_lp[i] - lp[k];
        ++proposed;
        if (std::log(us[i]) < log_accept) {
          walkers.row(k) = proposals.row(i);
          lp[k] = prop_lp[i];
          ++accepted;
        }
      }
    }
    out.samples.middleRows(static_cast<long>(sweep) * K, K) = walkers;
    out.log_posteriors.segment(static_cast<long>(sweep) * K, K) = lp;
  }
  out.acceptance_rate = static_cast<double>(accepted) / static_cast<double>(proposed);
  return out;
}

Posterior cem_run(const TrajectorySet& set, const PendulumModel& model,
                  const LikelihoodConfig& lik, const CemConfig& cfg) {
  const SampleSpace sp = make_space(set, model, lik);
  Eigen::VectorXd lower = Eigen::VectorXd::Constant(sp.dim, -kInf);
  Eigen::VectorXd upper = Eigen::VectorXd::Constant(sp.dim, kInf);
  lower.head(sp.M).setZero();
  upper.head(sp.M).setOnes();
  Eigen::VectorXd init_std = Eigen::VectorXd::Constant(sp.dim, 0.1);
  init_std.head(sp.M).setConstant(0.25);

  const auto objective = [&](const Eigen::VectorXd& v) { return eval_space(sp, v, false).logp; };
  CemResult res = cem_optimize(objective, lower, upper, initial_point(sp), init_std, cfg);
  return posterior_from_rows(sp, res.population, std::move(res.mean_score_trace), cfg.threads);
}

Posterior sgld_run(const TrajectorySet& set, const PendulumModel& model,
                   const LikelihoodConfig& lik, const SgldConfig& cfg) {
  const SampleSpace sp = make_space(set, model, lik);
  Eigen::VectorXd lower = Eigen::VectorXd::Constant(sp.dim, -kInf);
  Eigen::VectorXd upper = Eigen::VectorXd::Constant(sp.dim, kInf);
  lower.head(sp.M).setZero();
  upper.head(sp.M).setOnes();

  const auto target = [&](const Eigen::VectorXd& v) {
    const SpaceEval e = eval_space(sp, v, true);
    return std::make_pair(e.logp, e.grad);
  };
  const ChainResult chain = sgld_sample(target, initial_point(sp), lower, upper, cfg);

  const int keep = std::min(cfg.posterior_samples, cfg.iterations);
  const Eigen::MatrixXd rows = chain.samples.bottomRows(keep);
  std::vector<double> trace(chain.log_posteriors.data(),
                            chain.log_posteriors.data() + chain.log_posteriors.size());
  return posterior_from_rows(sp, rows, std::move(trace), 1);
}

Posterior stretch_move_run(const TrajectorySet& set, const PendulumModel& model,
                           const LikelihoodConfig& lik, const StretchConfig& cfg) {
  const SampleSpace sp = make_space(set, model, lik);
  if (cfg.walkers < 4 || cfg.walkers % 2 != 0)
    throw ConfigError("walker count must be even and at least 4");

  Eigen::MatrixXd init(cfg.walkers, sp.dim);
  const Eigen::MatrixXd unit = sobol_points(cfg.walkers, sp.M);
  const Eigen::VectorXd base = initial_point(sp);
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int k = 0; k < cfg.walkers; ++k) {
    init.row(k).head(sp.M) = unit.row(k);
    for (int d = sp.M; d < sp.dim; ++d) init(k, d) = base[d] + 0.01 * normal(rng);
  }

  const auto target = [&](const Eigen::VectorXd& v) { return eval_space(sp, v, false).logp; };
  const ChainResult chain = stretch_sample(target, init, cfg);

  const long total = chain.samples.rows();
  const long keep = std::min<long>(cfg.posterior_samples, total);
  const Eigen::MatrixXd rows = chain.samples.bottomRows(keep);
  std::vector<double> trace;
  trace.reserve(cfg.iterations);
  for (int sweep = 0; sweep < cfg.iterations; ++sweep)
    trace.push_back(chain.log_posteriors.segment(static_cast<long>(sweep) * cfg.walkers,
                                                 cfg.walkers).mean());
  return posterior_from_rows(sp, rows, std::move(trace), cfg.threads);
}

}  // namespace steinsim
