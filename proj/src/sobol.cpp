#include "steinsim/sobol.hpp"

#include <cstdint>
#include <vector>

#include "steinsim/errors.hpp"

namespace steinsim {

namespace {

constexpr int kBits = 32;

// Joe-Kuo primitive polynomial data per dimension (dimension 1 is the plain
// van der Corput sequence): degree s, coefficient bits a, initial m values.
struct Direction {
  int s;
  uint32_t a;
  uint32_t m[7];
};

constexpr Direction kDirections[] = {
    {1, 0, {1}},                     // d=2
    {2, 1, {1, 3}},                  // d=3
    {3, 1, {1, 3, 1}},               // d=4
    {3, 2, {1, 1, 1}},               // d=5
    {4, 1, {1, 1, 3, 3}},            // d=6
    {4, 4, {1, 3, 5, 13}},           // d=7
    {5, 2, {1, 1, 5, 5, 17}},        // d=8
    {5, 4, {1, 1, 5, 5, 5}},         // d=9
    {5, 7, {1, 1, 7, 11, 19}},       // d=10
    {5, 11, {1, 1, 5, 1, 1}},        // d=11
    {5, 13, {1, 1, 1, 3, 11}},       // d=12
    {5, 14, {1, 3, 5, 5, 31}},       // d=13
    {6, 1, {1, 3, 3, 9, 7, 49}},     // d=14
    {6, 13, {1, 1, 1, 15, 21, 21}},  // d=15
    {6, 16, {1, 3, 1, 13, 27, 49}},  // d=16
    {6, 19, {1, 1, 1, 15, 7, 5}},    // d=17
    {6, 22, {1, 3, 1, 15, 13, 25}},  // d=18
    {6, 25, {1, 1, 5, 5, 19, 61}},   // d=19
    {7, 1, {1, 3, 7, 11, 23, 15, 103}},  // d=20
    {7, 4, {1, 3, 7, 13, 13, 15, 69}},   // d=21
};

// direction vectors v[k] = m[k] << (kBits - k - 1), k zero-based
std::vector<uint32_t> direction_vectors(int dim_index) {
  std::vector<uint32_t> m(kBits);
  if (dim_index == 0) {
    for (int k = 0; k < kBits; ++k) m[k] = 1;
  } else {
    const Direction& dir = kDirections[dim_index - 1];
    const int s = dir.s;
    for (int k = 0; k < s; ++k) m[k] = dir.m[k];
    for (int k = s; k < kBits; ++k) {
      uint32_t v = m[k - s] ^ (m[k - s] << s);
      for (int i = 1; i < s; ++i)
        if ((dir.a >> (s - 1 - i)) & 1u) v ^= m[k - i] << i;
      m[k] = v;
    }
  }
  std::vector<uint32_t> v(kBits);
  for (int k = 0; k < kBits; ++k) v[k] = m[k] << (kBits - k - 1);
  return v;
}

int lowest_zero_bit(uint32_t n) {
  int c = 0;
  while (n & 1u) {
    n >>= 1;
    ++c;
  }
  return c;
}

}  // namespace

Eigen::MatrixXd sobol_points(int n, int dim) {
  if (n < 1) throw ConfigError("need at least one Sobol point");
  if (dim < 1 || dim > kSobolMaxDim)
    throw ConfigError("Sobol dimension " + std::to_string(dim) + " outside supported range 1.." +
                      std::to_string(kSobolMaxDim));
  std::vector<std::vector<uint32_t>> v(dim);
  for (int d = 0; d < dim; ++d) v[d] = direction_vectors(d);

  Eigen::MatrixXd pts(n, dim);
  std::vector<uint32_t> x(dim, 0);
  const double scale = 1.0 / 4294967296.0;  // 2^-32
  for (int d = 0; d < dim; ++d) pts(0, d) = 0.0;
  for (int i = 1; i < n; ++i) {
    const int c = lowest_zero_bit(static_cast<uint32_t>(i - 1));
    for (int d = 0; d < dim; ++d) {
      x[d] ^= v[d][c];
      pts(i, d) = x[d] * scale;
    }
  }
  return pts;
}

Eigen::MatrixXd sobol_init(int n, const ParamLimits& limits) {
  const int dim = static_cast<int>(limits.min.size());
  Eigen::MatrixXd pts = sobol_points(n, dim);
  for (int d = 0; d < dim; ++d) {
    const double lo = limits.min[d];
    const double span = limits.max[d] - lo;
    if (!(span > 0.0)) throw ConfigError("parameter limits must satisfy min < max");
    pts.col(d) = (pts.col(d).array() * span + lo).matrix();
  }
  return pts;
}

}  // namespace steinsim
