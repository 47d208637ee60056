#include <doctest.h>

#include <Eigen/Dense>

#include "helpers.hpp"
#include "steinsim/errors.hpp"
#include "steinsim/sobol.hpp"

using namespace steinsim;
using steinsim::testing::two_length_model;

TEST_CASE("sobol sequence matches the reference tables") {
  // first eight unscrambled base-2 points, Gray-code order
  SUBCASE("one dimension") {
    Eigen::MatrixXd pts = sobol_points(8, 1);
    const double expect[8] = {0.0, 0.5, 0.75, 0.25, 0.375, 0.875, 0.625, 0.125};
    for (int i = 0; i < 8; ++i) CHECK(pts(i, 0) == expect[i]);
  }
  SUBCASE("two dimensions") {
    Eigen::MatrixXd pts = sobol_points(8, 2);
    const double expect[8][2] = {{0.0, 0.0},     {0.5, 0.5},     {0.75, 0.25}, {0.25, 0.75},
                                 {0.375, 0.375}, {0.875, 0.875}, {0.625, 0.125},
                                 {0.125, 0.625}};
    for (int i = 0; i < 8; ++i)
      for (int j = 0; j < 2; ++j) CHECK(pts(i, j) == expect[i][j]);
  }
  SUBCASE("three dimensions") {
    Eigen::MatrixXd pts = sobol_points(8, 3);
    const double expect[8] = {0.0, 0.5, 0.25, 0.75, 0.625, 0.125, 0.875, 0.375};
    for (int i = 0; i < 8; ++i) CHECK(pts(i, 2) == expect[i]);
  }
  SUBCASE("five dimensions") {
    Eigen::MatrixXd pts = sobol_points(8, 5);
    const double expect3[8] = {0.0, 0.5, 0.25, 0.75, 0.875, 0.375, 0.625, 0.125};
    const double expect4[8] = {0.0, 0.5, 0.75, 0.25, 0.375, 0.875, 0.625, 0.125};
    for (int i = 0; i < 8; ++i) {
      CHECK(pts(i, 3) == expect3[i]);
      CHECK(pts(i, 4) == expect4[i]);
    }
  }
}

TEST_CASE("sobol points fill the unit cube evenly") {
  Eigen::MatrixXd pts = sobol_points(256, 6);
  CHECK(pts.minCoeff() >= 0.0);
  CHECK(pts.maxCoeff() < 1.0);
  Eigen::RowVectorXd mean = pts.colwise().mean();
  for (int j = 0; j < 6; ++j) CHECK(std::abs(mean[j] - 0.5) < 0.01);
  // no duplicated points in a power-of-two prefix
  for (int i = 1; i < 64; ++i)
    for (int k = 0; k < i; ++k) CHECK((pts.row(i) - pts.row(k)).norm() > 0.0);
}

TEST_CASE("sobol rejects unsupported shapes") {
  CHECK_THROWS_AS(sobol_points(4, 0), ConfigError);
  CHECK_THROWS_AS(sobol_points(4, kSobolMaxDim + 1), ConfigError);
  CHECK_THROWS_AS(sobol_points(0, 2), ConfigError);
  CHECK_NOTHROW(sobol_points(3, kSobolMaxDim));
}

TEST_CASE("sobol init spans the limit box") {
  PendulumModel m = two_length_model();
  ParamLimits lim = param_limits(m);
  Eigen::MatrixXd pts = sobol_init(32, lim);
  REQUIRE(pts.rows() == 32);
  REQUIRE(pts.cols() == 2);
  for (int i = 0; i < pts.rows(); ++i)
    for (int j = 0; j < 2; ++j) {
      CHECK(pts(i, j) >= lim.min[j]);
      CHECK(pts(i, j) < lim.max[j]);
    }
  // first point sits at the lower corner, second at the center
  CHECK(pts(0, 0) == lim.min[0]);
  CHECK(pts(1, 0) == 0.5 * (lim.min[0] + lim.max[0]));
}
