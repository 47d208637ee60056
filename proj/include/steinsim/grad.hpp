#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <vector>

#include "steinsim/dual.hpp"
#include "steinsim/errors.hpp"

namespace steinsim {

struct GradResult {
  double value = 0.0;
  Eigen::VectorXd gradient;
};

/// Evaluates f on a dual vector seeded in chunks of kDualLanes and assembles
/// the full gradient. f takes const std::vector<Dual>& and returns Dual.
/// Non-finite intermediates and zero divides are reported with the index of
/// the offending operation in the trace.
template <typename F>
GradResult grad(F&& f, const Eigen::VectorXd& x) {
  const int n = static_cast<int>(x.size());
  GradResult out;
  out.gradient.resize(n);

  std::vector<Dual> args(n);
  for (int pass = 0; pass * kDualLanes < n || (pass == 0 && n == 0); ++pass) {
    const int lo = pass * kDualLanes;
    const int count = std::min(kDualLanes, n - lo);
    for (int i = 0; i < n; ++i) {
      args[i] = Dual(x[i]);
      if (i >= lo && i < lo + count) args[i].d[i - lo] = 1.0;
    }

    detail::EvalTrace trace;
    Dual y;
    {
      detail::TraceScope scope(&trace);
      try {
        y = f(args);
      } catch (const NumericalError&) {
        if (trace.first_bad_op >= 0)
          throw NonFiniteError(trace.message, trace.first_bad_op);
        throw;
      }
    }
    if (trace.first_bad_op >= 0) throw NonFiniteError(trace.message, trace.first_bad_op);
    if (!std::isfinite(y.v)) throw NonFiniteError("non-finite result", trace.op_count);

    out.value = y.v;
    for (int i = 0; i < count; ++i) out.gradient[lo + i] = y.d[i];
    if (n == 0) break;
  }
  return out;
}

struct GradCheckResult {
  double max_rel_error = 0.0;
  int worst_index = -1;
  Eigen::VectorXd analytic;
  Eigen::VectorXd numeric;
};

/// Central-difference comparison against grad(). g takes const
/// Eigen::VectorXd& and returns double; it must agree with f on values.
template <typename F, typename G>
GradCheckResult check_gradient(F&& f, G&& g, const Eigen::VectorXd& x, double step = 1e-6) {
  GradCheckResult r;
  r.analytic = grad(f, x).gradient;
  r.numeric.resize(x.size());
  for (int i = 0; i < x.size(); ++i) {
    Eigen::VectorXd xp = x, xm = x;
    xp[i] += step;
    xm[i] -= step;
    r.numeric[i] = (g(xp) - g(xm)) / (2.0 * step);
    const double denom = std::max({std::abs(r.analytic[i]), std::abs(r.numeric[i]), 1e-8});
    const double rel = std::abs(r.analytic[i] - r.numeric[i]) / denom;
    if (rel > r.max_rel_error) {
      r.max_rel_error = rel;
      r.worst_index = static_cast<int>(i);
    }
  }
  return r;
}

}  // namespace steinsim
