#pragma once

#include <Eigen/Dense>

#include "steinsim/likelihood.hpp"
#include "steinsim/pendulum.hpp"

namespace steinsim::testing {

// two length parameters, center of mass tied to the tip so both lengths are
// observable from joint angles alone
inline PendulumModel two_length_model() {
  PendulumModel m;
  m.dt = 0.01;
  m.param_spec = {
      {"l1", {{0, LinkField::kLength}, {0, LinkField::kComX}}, 0.5, 3.0},
      {"l2", {{1, LinkField::kLength}, {1, LinkField::kComX}}, 0.5, 3.0},
  };
  return m;
}

inline State start_state(int k) {
  State s;
  s.q = {0.9 + 0.13 * k, -0.6 + 0.07 * k};
  s.qd = {0.0, 0.0};
  return s;
}

inline TrajectorySet reference_set(const PendulumModel& m, const Eigen::VectorXd& theta, int K,
                                   int T) {
  TrajectorySet set;
  for (int k = 0; k < K; ++k) set.push_back(rollout(m, theta, start_state(k), T));
  return set;
}

}  // namespace steinsim::testing
