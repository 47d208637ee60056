#pragma once

#include <Eigen/Dense>
#include <array>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "steinsim/dual.hpp"
#include "steinsim/errors.hpp"

namespace steinsim {

enum class LinkField { kMass, kInertia, kComX, kComY, kLength, kDamping };

struct LinkParams {
  double mass = 1.0;
  double inertia = 0.05;  // about COM, planar scalar
  double com_x = 0.5;     // COM offset along the link axis, link frame
  double com_y = 0.0;
  double length = 1.0;    // joint-to-joint distance
  double damping = 0.0;   // viscous joint friction
};

// One estimable parameter. Usually a single target; several targets when
// quantities are physically tied (a point mass at the tip binds length and
// com_x to the same value).
struct ParamBinding {
  std::string name;
  std::vector<std::pair<int, LinkField>> targets;
  double min = 0.0;
  double max = 1.0;
};

// Planar 2-link chain hanging from a fixed base. Angles are measured from
// the downward vertical, counterclockwise positive; q[1] is relative to
// link 1. Gravity acts along -y.
struct PendulumModel {
  std::array<LinkParams, 2> links;
  double gravity = 9.81;
  double dt = 0.01;
  std::vector<ParamBinding> param_spec;
  std::vector<int> observed_dims = {0, 1, 2, 3};  // into [q0, q1, qd0, qd1]
};

template <typename S>
struct StateT {
  std::array<S, 2> q{};
  std::array<S, 2> qd{};
};
using State = StateT<double>;

struct Trajectory {
  Eigen::MatrixXd observations;  // one row per step after the start state
  double dt = 0.01;
  State start_state;
};
using TrajectorySet = std::vector<Trajectory>;

// Model with the estimable subvector substituted in, generic over the
// scalar so rollouts can carry derivatives.
template <typename S>
struct LinkView {
  S mass, inertia, com_x, com_y, length, damping;
};

template <typename S>
struct ModelView {
  std::array<LinkView<S>, 2> links;
  double gravity = 9.81;
  double dt = 0.01;
};

inline constexpr double kMaxVelocity = 1e6;  // rollout divergence guard

void validate(const PendulumModel& model);

template <typename S>
ModelView<S> apply_params(const PendulumModel& model, std::span<const S> theta) {
  if (static_cast<int>(theta.size()) != static_cast<int>(model.param_spec.size()))
    throw ConfigError("parameter vector length " + std::to_string(theta.size()) +
                      " does not match param_spec length " +
                      std::to_string(model.param_spec.size()));
  ModelView<S> v;
  v.gravity = model.gravity;
  v.dt = model.dt;
  for (int i = 0; i < 2; ++i) {
    const LinkParams& p = model.links[i];
    v.links[i] = {S(p.mass), S(p.inertia), S(p.com_x), S(p.com_y), S(p.length), S(p.damping)};
  }
  for (size_t k = 0; k < model.param_spec.size(); ++k) {
    for (const auto& [link, field] : model.param_spec[k].targets) {
      LinkView<S>& l = v.links[link];
      switch (field) {
        case LinkField::kMass: l.mass = theta[k]; break;
        case LinkField::kInertia: l.inertia = theta[k]; break;
        case LinkField::kComX: l.com_x = theta[k]; break;
        case LinkField::kComY: l.com_y = theta[k]; break;
        case LinkField::kLength: l.length = theta[k]; break;
        case LinkField::kDamping: l.damping = theta[k]; break;
      }
    }
  }
  return v;
}

// Closed-form dynamics of the planar chain with COM offsets:
// M(q) qdd = tau - C(q, qd) - G(q) - damping .* qd
template <typename S>
std::array<S, 2> forward_dynamics(const ModelView<S>& m, const std::array<S, 2>& q,
                                  const std::array<S, 2>& qd, const std::array<S, 2>& tau) {
  using std::cos;
  using std::sin;
  const LinkView<S>& l1 = m.links[0];
  const LinkView<S>& l2 = m.links[1];
  const double g = m.gravity;

  const S c2 = cos(q[1]);
  const S s2 = sin(q[1]);

  const S a1 = l1.mass * (l1.com_x * l1.com_x + l1.com_y * l1.com_y) + l1.inertia +
               l2.mass * l1.length * l1.length;
  const S a2 = l2.mass * (l2.com_x * l2.com_x + l2.com_y * l2.com_y) + l2.inertia;
  const S b = l2.mass * l1.length * (l2.com_x * c2 - l2.com_y * s2);
  const S bp = l2.mass * l1.length * (-l2.com_x * s2 - l2.com_y * c2);

  const S M11 = a1 + a2 + 2.0 * b;
  const S M12 = a2 + b;
  const S M22 = a2;

  // symmetric 2x2 eigenvalue ratio as the condition number
  {
    const double m11 = value_of(M11), m12 = value_of(M12), m22 = value_of(M22);
    const double mid = 0.5 * (m11 + m22);
    const double disc = std::sqrt(0.25 * (m11 - m22) * (m11 - m22) + m12 * m12);
    const double lo = mid - disc, hi = mid + disc;
    if (!(lo > 0.0) || hi > 1e12 * lo)
      throw NumericalError("mass matrix near singular");
  }

  const S C1 = bp * qd[1] * (2.0 * qd[0] + qd[1]);
  const S C2 = -bp * qd[0] * qd[0];

  const S s1 = sin(q[0]);
  const S c1 = cos(q[0]);
  const S sa = sin(q[0] + q[1]);
  const S ca = cos(q[0] + q[1]);
  const S G2 = g * l2.mass * (l2.com_x * sa + l2.com_y * ca);
  const S G1 = g * (l1.mass * (l1.com_x * s1 + l1.com_y * c1) + l2.mass * l1.length * s1) + G2;

  const S r1 = tau[0] - C1 - G1 - l1.damping * qd[0];
  const S r2 = tau[1] - C2 - G2 - l2.damping * qd[1];

  const S det = M11 * M22 - M12 * M12;
  return {(M22 * r1 - M12 * r2) / det, (M11 * r2 - M12 * r1) / det};
}

// semi-implicit Euler: velocity first, then position with the new velocity
template <typename S>
StateT<S> step(const ModelView<S>& m, const StateT<S>& x, const std::array<S, 2>& tau) {
  const std::array<S, 2> qdd = forward_dynamics(m, x.q, x.qd, tau);
  StateT<S> out;
  for (int i = 0; i < 2; ++i) {
    out.qd[i] = x.qd[i] + qdd[i] * m.dt;
    out.q[i] = x.q[i] + out.qd[i] * m.dt;
  }
  return out;
}

Eigen::Vector2d forward_dynamics(const PendulumModel& model, const Eigen::VectorXd& theta,
                                 const State& x, const Eigen::Vector2d& tau);
State step(const PendulumModel& model, const Eigen::VectorXd& theta, const State& x,
           double t = 0.0);
Trajectory rollout(const PendulumModel& model, const Eigen::VectorXd& theta, const State& x0,
                   int T);

Eigen::Vector4d state_vector(const State& x);
State state_from_vector(const Eigen::Vector4d& v);
Eigen::VectorXd observe(const PendulumModel& model, const State& x);
// Only valid when observed_dims covers the full state.
State state_from_observation(const PendulumModel& model, const Eigen::VectorXd& obs);

double kinetic_energy(const ModelView<double>& m, const State& x);
double potential_energy(const ModelView<double>& m, const State& x);
double mechanical_energy(const ModelView<double>& m, const State& x);

}  // namespace steinsim
