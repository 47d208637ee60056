#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <random>

#include "helpers.hpp"
#include "steinsim/baselines.hpp"
#include "steinsim/errors.hpp"
#include "steinsim/posterior.hpp"

using namespace steinsim;
using steinsim::testing::reference_set;
using steinsim::testing::two_length_model;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Eigen::VectorXd vec2(double a, double b) {
  Eigen::VectorXd v(2);
  v << a, b;
  return v;
}

}  // namespace

TEST_CASE("cem contracts onto a quadratic optimum") {
  auto logp = [](const Eigen::VectorXd& x) {
    return -(x(0) - 1.5) * (x(0) - 1.5) - 2.0 * (x(1) + 0.5) * (x(1) + 0.5);
  };
  CemConfig cfg;
  cfg.population = 128;
  cfg.elite_fraction = 0.25;
  cfg.iterations = 40;
  cfg.seed = 4;
  CemResult res = cem_optimize(logp, vec2(-kInf, -kInf), vec2(kInf, kInf), vec2(0.0, 0.0),
                               vec2(1.0, 1.0), cfg);
  CHECK(std::abs(res.state.mean(0) - 1.5) < 0.1);
  CHECK(std::abs(res.state.mean(1) + 0.5) < 0.1);
  CHECK(res.state.diag_std.maxCoeff() < 0.5);
  CHECK(res.mean_score_trace.size() == 40);
  CHECK(res.mean_score_trace.back() > res.mean_score_trace.front());
  CHECK(res.population.rows() == 128);
}

TEST_CASE("cem keeps samples inside bounds") {
  auto logp = [](const Eigen::VectorXd& x) { return x(0); };  // pushes right
  Eigen::VectorXd lower(1), upper(1);
  lower << -1.0;
  upper << 2.0;
  CemConfig cfg;
  cfg.population = 64;
  cfg.iterations = 30;
  cfg.seed = 1;
  Eigen::VectorXd m0(1), s0(1);
  m0 << 0.0;
  s0 << 5.0;
  CemResult res = cem_optimize(logp, lower, upper, m0, s0, cfg);
  CHECK(res.population.minCoeff() >= -1.0);
  CHECK(res.population.maxCoeff() <= 2.0);
  CHECK(res.state.mean(0) > 1.5);
}

TEST_CASE("cem with full elite fraction reproduces population moments") {
  auto logp = [](const Eigen::VectorXd& x) { return -x.squaredNorm(); };
  CemConfig cfg;
  cfg.population = 256;
  cfg.elite_fraction = 1.0;
  cfg.iterations = 1;
  cfg.seed = 7;
  Eigen::VectorXd m0 = vec2(0.3, -0.2), s0 = vec2(0.7, 1.1);
  CemResult res = cem_optimize(logp, vec2(-kInf, -kInf), vec2(kInf, kInf), m0, s0, cfg);
  // every sample is elite, so the refit equals the population moments
  Eigen::RowVectorXd mean = res.population.colwise().mean();
  CHECK((res.state.mean - mean.transpose()).norm() < 1e-12);
  Eigen::MatrixXd centered = res.population.rowwise() - mean;
  Eigen::RowVectorXd var = centered.array().square().colwise().mean();
  CHECK((res.state.diag_std.array().square().matrix() - var.transpose()).norm() < 1e-12);
}

TEST_CASE("cem rejects bad settings") {
  auto logp = [](const Eigen::VectorXd&) { return 0.0; };
  Eigen::VectorXd z = Eigen::VectorXd::Zero(1), one = Eigen::VectorXd::Ones(1);
  CemConfig cfg;
  cfg.population = 2;
  CHECK_THROWS_AS(cem_optimize(logp, -one, one, z, one, cfg), ConfigError);
  cfg.population = 64;
  cfg.elite_fraction = 0.0;
  CHECK_THROWS_AS(cem_optimize(logp, -one, one, z, one, cfg), ConfigError);
  cfg.elite_fraction = 1.5;
  CHECK_THROWS_AS(cem_optimize(logp, -one, one, z, one, cfg), ConfigError);
  cfg.elite_fraction = 0.125;
  cfg.iterations = 0;
  CHECK_THROWS_AS(cem_optimize(logp, -one, one, z, one, cfg), ConfigError);
}

TEST_CASE("sgld without noise ascends the tilted parabola") {
  auto logp_grad = [](const Eigen::VectorXd& x) {
    Eigen::VectorXd g(1);
    g << -2.0 * (x(0) - 0.8);
    return std::make_pair(-(x(0) - 0.8) * (x(0) - 0.8), g);
  };
  SgldConfig cfg;
  cfg.iterations = 2000;
  cfg.step_eps = 1e-2;
  cfg.posterior_samples = 10;
  cfg.zero_noise = true;
  Eigen::VectorXd init(1), lower(1), upper(1);
  init << -3.0;
  lower << -kInf;
  upper << kInf;
  ChainResult res = sgld_sample(logp_grad, init, lower, upper, cfg);
  CHECK(res.samples.rows() == 2000);
  // pure gradient flow converges to the mode
  CHECK(std::abs(res.samples(res.samples.rows() - 1, 0) - 0.8) < 1e-6);
  CHECK(res.acceptance_rate == 1.0);
}

TEST_CASE("sgld samples roughly match a gaussian target") {
  auto logp_grad = [](const Eigen::VectorXd& x) {
    Eigen::VectorXd g = -x;
    return std::make_pair(-0.5 * x.squaredNorm(), g);
  };
  SgldConfig cfg;
  cfg.iterations = 60000;
  cfg.step_eps = 5e-2;
  cfg.seed = 12;
  Eigen::VectorXd init(1), lower(1), upper(1);
  init << 0.0;
  lower << -kInf;
  upper << kInf;
  ChainResult res = sgld_sample(logp_grad, init, lower, upper, cfg);
  Eigen::VectorXd xs = res.samples.bottomRows(40000).col(0);
  const double mean = xs.mean();
  const double var = (xs.array() - mean).square().mean();
  CHECK(std::abs(mean) < 0.1);
  // langevin with finite eps inflates variance by about eps/2
  CHECK(var == doctest::Approx(1.0).epsilon(0.15));
}

TEST_CASE("sgld reflects at the bounds") {
  auto logp_grad = [](const Eigen::VectorXd& x) {
    Eigen::VectorXd g(1);
    g << 4.0;  // constant push upward against the wall
    return std::make_pair(4.0 * x(0), g);
  };
  SgldConfig cfg;
  cfg.iterations = 5000;
  cfg.step_eps = 2e-2;
  cfg.seed = 3;
  Eigen::VectorXd init(1), lower(1), upper(1);
  init << 0.5;
  lower << 0.0;
  upper << 1.0;
  ChainResult res = sgld_sample(logp_grad, init, lower, upper, cfg);
  CHECK(res.samples.minCoeff() >= 0.0);
  CHECK(res.samples.maxCoeff() <= 1.0);
  // mass piles up near the upper wall
  CHECK(res.samples.bottomRows(2000).col(0).mean() > 0.6);
}

TEST_CASE("stretch move recovers gaussian moments") {
  auto logp = [](const Eigen::VectorXd& x) {
    const double dx = x(0) - 1.0;
    const double dy = x(1) + 2.0;
    return -0.5 * (dx * dx / 0.25 + dy * dy / 4.0);
  };
  StretchConfig cfg;
  cfg.walkers = 32;
  cfg.iterations = 3000;
  cfg.posterior_samples = 32 * 1500;
  cfg.seed = 5;
  Eigen::MatrixXd init(32, 2);
  std::mt19937_64 rng(99);
  std::normal_distribution<double> nd(0.0, 0.5);
  for (int i = 0; i < 32; ++i) {
    init(i, 0) = 1.0 + nd(rng);
    init(i, 1) = -2.0 + nd(rng);
  }
  ChainResult res = stretch_sample(logp, init, cfg);
  // the raw chain keeps every sweep; trimming to posterior_samples happens
  // in the trajectory wrapper
  CHECK(res.samples.rows() == 32 * 3000);
  CHECK(res.acceptance_rate > 0.2);
  CHECK(res.acceptance_rate < 0.95);
  Eigen::MatrixXd kept = res.samples.bottomRows(32 * 1500);
  Eigen::RowVectorXd mean = kept.colwise().mean();
  CHECK(std::abs(mean(0) - 1.0) < 0.1);
  CHECK(std::abs(mean(1) + 2.0) < 0.3);
  Eigen::MatrixXd centered = kept.rowwise() - mean;
  Eigen::RowVectorXd var = centered.array().square().colwise().mean();
  CHECK(var(0) == doctest::Approx(0.25).epsilon(0.25));
  CHECK(var(1) == doctest::Approx(4.0).epsilon(0.25));
}

TEST_CASE("stretch move validates its inputs") {
  auto logp = [](const Eigen::VectorXd&) { return 0.0; };
  StretchConfig cfg;
  cfg.walkers = 3;  // odd and too few
  Eigen::MatrixXd init = Eigen::MatrixXd::Zero(3, 2);
  CHECK_THROWS_AS(stretch_sample(logp, init, cfg), ConfigError);
  cfg.walkers = 4;
  cfg.stretch_a = 1.0;
  init = Eigen::MatrixXd::Zero(4, 2);
  CHECK_THROWS_AS(stretch_sample(logp, init, cfg), ConfigError);

  cfg.stretch_a = 2.0;
  auto zero_density = [](const Eigen::VectorXd&) { return -kInf; };
  CHECK_THROWS_AS(stretch_sample(zero_density, init, cfg), NumericalError);
}

TEST_CASE("stretch move is deterministic across thread counts") {
  auto logp = [](const Eigen::VectorXd& x) { return -0.5 * x.squaredNorm(); };
  StretchConfig cfg;
  cfg.walkers = 8;
  cfg.iterations = 50;
  cfg.posterior_samples = 8 * 50;
  cfg.seed = 21;
  Eigen::MatrixXd init(8, 2);
  for (int i = 0; i < 8; ++i) {
    init(i, 0) = 0.1 * i;
    init(i, 1) = -0.05 * i;
  }
  cfg.threads = 1;
  ChainResult a = stretch_sample(logp, init, cfg);
  cfg.threads = 4;
  ChainResult b = stretch_sample(logp, init, cfg);
  CHECK((a.samples - b.samples).norm() == 0.0);
  CHECK(a.acceptance_rate == b.acceptance_rate);
}

TEST_CASE("baseline runs recover the reference parameters") {
  PendulumModel model = two_length_model();
  Eigen::VectorXd truth(2);
  truth << 1.0, 1.2;
  TrajectorySet set = reference_set(model, truth, 2, 100);
  LikelihoodConfig lik;
  lik.sigma_obs = Eigen::VectorXd::Constant(1, 0.05);

  SUBCASE("cem") {
    CemConfig cfg;
    cfg.population = 64;
    cfg.iterations = 30;
    cfg.seed = 2;
    cfg.threads = 2;
    Posterior post = cem_run(set, model, lik, cfg);
    REQUIRE(post.particles.size() == 64);
    Eigen::RowVectorXd mean = particle_matrix(post).colwise().mean();
    CHECK(std::abs(mean(0) - truth(0)) < 0.1);
    CHECK(std::abs(mean(1) - truth(1)) < 0.1);
    CHECK(post.log_likelihoods.maxCoeff() > -5.0);
  }

  SUBCASE("sgld") {
    // langevin likes a flatter surface than the optimizers: a wider sigma
    // keeps the drift step stable from the box midpoint start
    LikelihoodConfig wide = lik;
    wide.sigma_obs = Eigen::VectorXd::Constant(1, 0.2);
    SgldConfig cfg;
    cfg.iterations = 4000;
    cfg.step_eps = 2e-5;
    cfg.posterior_samples = 200;
    cfg.seed = 6;
    Posterior post = sgld_run(set, model, wide, cfg);
    REQUIRE(post.particles.size() == 200);
    Eigen::RowVectorXd mean = particle_matrix(post).colwise().mean();
    CHECK(std::abs(mean(0) - truth(0)) < 0.25);
    CHECK(std::abs(mean(1) - truth(1)) < 0.25);
  }

  SUBCASE("stretch") {
    StretchConfig cfg;
    cfg.walkers = 16;
    cfg.iterations = 300;
    cfg.posterior_samples = 800;
    cfg.seed = 8;
    cfg.threads = 2;
    Posterior post = stretch_move_run(set, model, lik, cfg);
    REQUIRE(post.particles.size() == 800);
    Eigen::RowVectorXd mean = particle_matrix(post).colwise().mean();
    CHECK(std::abs(mean(0) - truth(0)) < 0.25);
    CHECK(std::abs(mean(1) - truth(1)) < 0.25);
  }
}

TEST_CASE("baseline runs respect parameter limits") {
  PendulumModel model = two_length_model();
  Eigen::VectorXd truth(2);
  truth << 0.6, 0.6;  // near the lower limit
  TrajectorySet set = reference_set(model, truth, 1, 60);
  LikelihoodConfig lik;
  lik.sigma_obs = Eigen::VectorXd::Constant(1, 0.2);
  ParamLimits lim = param_limits(model);

  CemConfig ccfg;
  ccfg.population = 32;
  ccfg.iterations = 10;
  ccfg.seed = 3;
  Posterior cpost = cem_run(set, model, lik, ccfg);
  Eigen::MatrixXd cth = particle_matrix(cpost);
  for (int i = 0; i < cth.rows(); ++i)
    for (int j = 0; j < cth.cols(); ++j) {
      CHECK(cth(i, j) >= lim.min(j) - 1e-12);
      CHECK(cth(i, j) <= lim.max(j) + 1e-12);
    }
  CHECK(cpost.out_of_bounds.empty());

  SgldConfig scfg;
  scfg.iterations = 500;
  scfg.step_eps = 1e-4;
  scfg.posterior_samples = 100;
  scfg.seed = 4;
  Posterior spost = sgld_run(set, model, lik, scfg);
  Eigen::MatrixXd sth = particle_matrix(spost);
  for (int i = 0; i < sth.rows(); ++i)
    for (int j = 0; j < sth.cols(); ++j) {
      CHECK(sth(i, j) >= lim.min(j) - 1e-12);
      CHECK(sth(i, j) <= lim.max(j) + 1e-12);
    }
  CHECK(spost.out_of_bounds.empty());
}
