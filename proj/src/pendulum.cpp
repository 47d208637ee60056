#include "steinsim/pendulum.hpp"

#include <cmath>

namespace steinsim {

void validate(const PendulumModel& model) {
  if (!(model.dt > 0.0)) throw ConfigError("dt must be positive");
  if (!(model.gravity >= 0.0)) throw ConfigError("gravity must be nonnegative");
  for (int i = 0; i < 2; ++i) {
    const LinkParams& l = model.links[i];
    const std::string tag = "link " + std::to_string(i + 1) + ": ";
    if (!(l.mass > 0.0)) throw ConfigError(tag + "mass must be positive");
    if (!(l.inertia > 0.0)) throw ConfigError(tag + "inertia must be positive");
    if (!(l.length > 0.0)) throw ConfigError(tag + "length must be positive");
    if (!(l.damping >= 0.0)) throw ConfigError(tag + "damping must be nonnegative");
  }
  for (const ParamBinding& p : model.param_spec) {
    if (p.targets.empty()) throw ConfigError("parameter " + p.name + " has no targets");
    if (!(p.min < p.max)) throw ConfigError("parameter " + p.name + " needs min < max");
    for (const auto& [link, field] : p.targets) {
      (void)field;
      if (link < 0 || link > 1)
        throw ConfigError("parameter " + p.name + " targets invalid link index");
    }
  }
  if (model.observed_dims.empty()) throw ConfigError("observed_dims must be nonempty");
  for (int d : model.observed_dims)
    if (d < 0 || d > 3) throw ConfigError("observed_dims entries must be in [0, 3]");
}

Eigen::Vector2d forward_dynamics(const PendulumModel& model, const Eigen::VectorXd& theta,
                                 const State& x, const Eigen::Vector2d& tau) {
  const auto view =
      apply_params<double>(model, std::span<const double>(theta.data(), theta.size()));
  const auto qdd = forward_dynamics(view, x.q, x.qd, {tau[0], tau[1]});
  return {qdd[0], qdd[1]};
}

State step(const PendulumModel& model, const Eigen::VectorXd& theta, const State& x, double t) {
  (void)t;  // torque hook: unactuated
  const auto view =
      apply_params<double>(model, std::span<const double>(theta.data(), theta.size()));
  return step(view, x, {0.0, 0.0});
}

Eigen::Vector4d state_vector(const State& x) {
  return {x.q[0], x.q[1], x.qd[0], x.qd[1]};
}

State state_from_vector(const Eigen::Vector4d& v) {
  State x;
  x.q = {v[0], v[1]};
  x.qd = {v[2], v[3]};
  return x;
}

Eigen::VectorXd observe(const PendulumModel& model, const State& x) {
  const Eigen::Vector4d full = state_vector(x);
  Eigen::VectorXd obs(model.observed_dims.size());
  for (size_t i = 0; i < model.observed_dims.size(); ++i) obs[i] = full[model.observed_dims[i]];
  return obs;
}

State state_from_observation(const PendulumModel& model, const Eigen::VectorXd& obs) {
  if (static_cast<int>(model.observed_dims.size()) != 4)
    throw ConfigError("full-state observation required to reconstruct a state");
  Eigen::Vector4d full = Eigen::Vector4d::Zero();
  for (size_t i = 0; i < model.observed_dims.size(); ++i) full[model.observed_dims[i]] = obs[i];
  return state_from_vector(full);
}

Trajectory rollout(const PendulumModel& model, const Eigen::VectorXd& theta, const State& x0,
                   int T) {
  if (T < 1) throw ConfigError("rollout length must be at least 1");
  const auto view =
      apply_params<double>(model, std::span<const double>(theta.data(), theta.size()));
  Trajectory traj;
  traj.dt = model.dt;
  traj.start_state = x0;
  traj.observations.resize(T, static_cast<int>(model.observed_dims.size()));
  State x = x0;
  for (int t = 0; t < T; ++t) {
    x = step(view, x, {0.0, 0.0});
    for (int i = 0; i < 2; ++i) {
      if (!std::isfinite(x.q[i]) || !std::isfinite(x.qd[i]) || std::abs(x.qd[i]) > kMaxVelocity)
        throw DivergenceError("rollout diverged", t + 1);
    }
    traj.observations.row(t) = observe(model, x).transpose();
  }
  return traj;
}

double kinetic_energy(const ModelView<double>& m, const State& x) {
  const LinkView<double>& l1 = m.links[0];
  const LinkView<double>& l2 = m.links[1];
  const double w1 = x.qd[0];
  const double w2 = x.qd[0] + x.qd[1];
  const double t1 =
      0.5 * l1.mass * w1 * w1 * (l1.com_x * l1.com_x + l1.com_y * l1.com_y) +
      0.5 * l1.inertia * w1 * w1;
  const double cross = l2.com_x * std::cos(x.q[1]) - l2.com_y * std::sin(x.q[1]);
  const double v2sq = l1.length * l1.length * w1 * w1 +
                      w2 * w2 * (l2.com_x * l2.com_x + l2.com_y * l2.com_y) +
                      2.0 * l1.length * w1 * w2 * cross;
  const double t2 = 0.5 * l2.mass * v2sq + 0.5 * l2.inertia * w2 * w2;
  return t1 + t2;
}

double potential_energy(const ModelView<double>& m, const State& x) {
  const LinkView<double>& l1 = m.links[0];
  const LinkView<double>& l2 = m.links[1];
  const double p1 = x.q[0];
  const double p2 = x.q[0] + x.q[1];
  const double c1y = -l1.com_x * std::cos(p1) + l1.com_y * std::sin(p1);
  const double c2y = -l1.length * std::cos(p1) - l2.com_x * std::cos(p2) + l2.com_y * std::sin(p2);
  return m.gravity * (l1.mass * c1y + l2.mass * c2y);
}

double mechanical_energy(const ModelView<double>& m, const State& x) {
  return kinetic_energy(m, x) + potential_energy(m, x);
}

}  // namespace steinsim
