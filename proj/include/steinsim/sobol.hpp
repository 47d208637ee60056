#pragma once

#include <Eigen/Dense>

#include "steinsim/likelihood.hpp"

namespace steinsim {

// supported dimensionality of the direction-number table
inline constexpr int kSobolMaxDim = 21;

// First n points of the base-2 Sobol sequence in [0,1)^dim, generated in
// Gray-code order with standard Joe-Kuo direction numbers. Point 0 is the
// origin.
Eigen::MatrixXd sobol_points(int n, int dim);

// points affinely mapped into the limit box, one row per particle
Eigen::MatrixXd sobol_init(int n, const ParamLimits& limits);

}  // namespace steinsim
