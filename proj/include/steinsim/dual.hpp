#pragma once

#include <array>
#include <cmath>

#include "steinsim/errors.hpp"

namespace steinsim {

// Number of derivative lanes carried by a Dual. Gradients with more seeded
// inputs are evaluated in chunks of this size (see grad.hpp).
inline constexpr int kDualLanes = 16;

namespace detail {

// Optional per-thread evaluation trace. When installed, every dual operation
// is counted and checked for finiteness so grad() can report the offending
// operation index. When absent (hot simulation loops), the cost is one
// branch per operation.
struct EvalTrace {
  long op_count = 0;
  long first_bad_op = -1;
  const char* message = nullptr;
};

inline thread_local EvalTrace* g_trace = nullptr;

inline void note_op(double value) {
  EvalTrace* tr = g_trace;
  if (!tr) return;
  ++tr->op_count;
  if (tr->first_bad_op < 0 && !std::isfinite(value)) {
    tr->first_bad_op = tr->op_count;
    tr->message = "non-finite result";
  }
}

inline void note_zero_divide() {
  if (EvalTrace* tr = g_trace) {
    ++tr->op_count;
    if (tr->first_bad_op < 0) {
      tr->first_bad_op = tr->op_count;
      tr->message = "division by zero";
    }
  }
}

struct TraceScope {
  explicit TraceScope(EvalTrace* tr) : prev(g_trace) { g_trace = tr; }
  ~TraceScope() { g_trace = prev; }
  EvalTrace* prev;
};

}  // namespace detail

/// Forward-mode differentiable scalar with kDualLanes derivative slots.
/// Constants convert implicitly with a zero derivative payload, so arithmetic
/// on unseeded Duals reproduces plain double arithmetic in the value slot.
struct Dual {
  double v = 0.0;
  std::array<double, kDualLanes> d{};

  Dual() = default;
  Dual(double value) : v(value) {}  // NOLINT: implicit by design

  static Dual seeded(double value, int lane) {
    Dual x(value);
    x.d[lane] = 1.0;
    return x;
  }
};

inline Dual operator-(const Dual& a) {
  Dual r(-a.v);
  for (int i = 0; i < kDualLanes; ++i) r.d[i] = -a.d[i];
  detail::note_op(r.v);
  return r;
}

inline Dual operator+(const Dual& a, const Dual& b) {
  Dual r(a.v + b.v);
  for (int i = 0; i < kDualLanes; ++i) r.d[i] = a.d[i] + b.d[i];
  detail::note_op(r.v);
  return r;
}

inline Dual operator-(const Dual& a, const Dual& b) {
  Dual r(a.v - b.v);
  for (int i = 0; i < kDualLanes; ++i) r.d[i] = a.d[i] - b.d[i];
  detail::note_op(r.v);
  return r;
}

inline Dual operator*(const Dual& a, const Dual& b) {
  Dual r(a.v * b.v);
  for (int i = 0; i < kDualLanes; ++i) r.d[i] = a.d[i] * b.v + a.v * b.d[i];
  detail::note_op(r.v);
  return r;
}

inline Dual operator/(const Dual& a, const Dual& b) {
  if (b.v == 0.0) {
    detail::note_zero_divide();
    throw NumericalError("dual division by zero");
  }
  // the value slot divides directly; multiplying by the reciprocal would
  // round twice and break value reproduction
  Dual r(a.v / b.v);
  const double inv = 1.0 / b.v;
  for (int i = 0; i < kDualLanes; ++i) r.d[i] = (a.d[i] - r.v * b.d[i]) * inv;
  detail::note_op(r.v);
  return r;
}

// double mixed forms avoid touching the payload of the constant side
inline Dual operator+(const Dual& a, double b) {
  Dual r = a;
  r.v += b;
  detail::note_op(r.v);
  return r;
}
inline Dual operator+(double a, const Dual& b) { return b + a; }

inline Dual operator-(const Dual& a, double b) {
  Dual r = a;
  r.v -= b;
  detail::note_op(r.v);
  return r;
}
inline Dual operator-(double a, const Dual& b) {
  Dual r = -b;
  r.v += a;
  return r;
}

inline Dual operator*(const Dual& a, double b) {
  Dual r(a.v * b);
  for (int i = 0; i < kDualLanes; ++i) r.d[i] = a.d[i] * b;
  detail::note_op(r.v);
  return r;
}
inline Dual operator*(double a, const Dual& b) { return b * a; }

inline Dual operator/(const Dual& a, double b) {
  if (b == 0.0) {
    detail::note_zero_divide();
    throw NumericalError("dual division by zero");
  }
  Dual r(a.v / b);
  const double inv = 1.0 / b;
  for (int i = 0; i < kDualLanes; ++i) r.d[i] = a.d[i] * inv;
  detail::note_op(r.v);
  return r;
}
inline Dual operator/(double a, const Dual& b) { return Dual(a) / b; }

inline Dual& operator+=(Dual& a, const Dual& b) { return a = a + b; }
inline Dual& operator-=(Dual& a, const Dual& b) { return a = a - b; }
inline Dual& operator*=(Dual& a, const Dual& b) { return a = a * b; }
inline Dual& operator/=(Dual& a, const Dual& b) { return a = a / b; }
inline Dual& operator+=(Dual& a, double b) { return a = a + b; }
inline Dual& operator-=(Dual& a, double b) { return a = a - b; }
inline Dual& operator*=(Dual& a, double b) { return a = a * b; }
inline Dual& operator/=(Dual& a, double b) { return a = a / b; }

inline bool operator<(const Dual& a, const Dual& b) { return a.v < b.v; }
inline bool operator>(const Dual& a, const Dual& b) { return a.v > b.v; }
inline bool operator<=(const Dual& a, const Dual& b) { return a.v <= b.v; }
inline bool operator>=(const Dual& a, const Dual& b) { return a.v >= b.v; }
inline bool operator==(const Dual& a, const Dual& b) { return a.v == b.v; }
inline bool operator!=(const Dual& a, const Dual& b) { return a.v != b.v; }

namespace detail {
// chain rule helper: outer value f(a.v) with local derivative df
inline Dual unary(const Dual& a, double f, double df) {
  Dual r(f);
  for (int i = 0; i < kDualLanes; ++i) r.d[i] = df * a.d[i];
  note_op(f);
  return r;
}
}  // namespace detail

inline Dual sin(const Dual& a) { return detail::unary(a, std::sin(a.v), std::cos(a.v)); }
inline Dual cos(const Dual& a) { return detail::unary(a, std::cos(a.v), -std::sin(a.v)); }
inline Dual exp(const Dual& a) {
  const double e = std::exp(a.v);
  return detail::unary(a, e, e);
}
inline Dual log(const Dual& a) { return detail::unary(a, std::log(a.v), 1.0 / a.v); }
inline Dual sqrt(const Dual& a) {
  const double s = std::sqrt(a.v);
  return detail::unary(a, s, 0.5 / s);
}

// abs has subgradient 0 at the kink
inline Dual abs(const Dual& a) {
  const double sign = a.v > 0.0 ? 1.0 : (a.v < 0.0 ? -1.0 : 0.0);
  return detail::unary(a, std::abs(a.v), sign);
}

// ties resolve to the first argument
inline Dual min(const Dual& a, const Dual& b) { return b.v < a.v ? b : a; }
inline Dual max(const Dual& a, const Dual& b) { return b.v > a.v ? b : a; }

// identity inside [lo, hi] with the boundary treated as inside, zero outside
inline Dual clamp(const Dual& x, double lo, double hi) {
  if (x.v < lo) return Dual(lo);
  if (x.v > hi) return Dual(hi);
  return x;
}

inline double value_of(double x) { return x; }
inline double value_of(const Dual& x) { return x.v; }

}  // namespace steinsim
