#pragma once

#include <cmath>
#include <ostream>

namespace bilevel {

/// Second-order forward-mode number. Carries a value, two independent directional
/// derivatives (u and v slots) and the cross derivative along u then v.
struct HyperDual {
  double f = 0.0;
  double fu = 0.0;
  double fv = 0.0;
  double fuv = 0.0;

  constexpr HyperDual() = default;
  constexpr HyperDual(double value) : f(value) {}  // NOLINT: constants promote implicitly
  constexpr HyperDual(double value, double du, double dv, double duv)
      : f(value), fu(du), fv(dv), fuv(duv) {}

  constexpr HyperDual& operator+=(const HyperDual& o) {
    f += o.f;
    fu += o.fu;
    fv += o.fv;
    fuv += o.fuv;
    return *this;
  }
  constexpr HyperDual& operator-=(const HyperDual& o) {
    f -= o.f;
    fu -= o.fu;
    fv -= o.fv;
    fuv -= o.fuv;
    return *this;
  }
  constexpr HyperDual& operator*=(const HyperDual& o) {
    *this = HyperDual{f * o.f, fu * o.f + f * o.fu, fv * o.f + f * o.fv,
                      fuv * o.f + fu * o.fv + fv * o.fu + f * o.fuv};
    return *this;
  }
  HyperDual& operator/=(const HyperDual& o);
};

/// Applies a scalar function with derivatives g, g', g'' to x (chain rule to second order).
constexpr HyperDual chain(const HyperDual& x, double g, double dg, double d2g) {
  return {g, dg * x.fu, dg * x.fv, dg * x.fuv + d2g * x.fu * x.fv};
}

constexpr HyperDual operator-(const HyperDual& x) { return {-x.f, -x.fu, -x.fv, -x.fuv}; }
constexpr HyperDual operator+(HyperDual a, const HyperDual& b) { return a += b; }
constexpr HyperDual operator-(HyperDual a, const HyperDual& b) { return a -= b; }
constexpr HyperDual operator*(HyperDual a, const HyperDual& b) { return a *= b; }

constexpr HyperDual operator+(HyperDual a, double b) { return a.f += b, a; }
constexpr HyperDual operator+(double a, HyperDual b) { return b.f += a, b; }
constexpr HyperDual operator-(HyperDual a, double b) { return a.f -= b, a; }
constexpr HyperDual operator-(double a, const HyperDual& b) { return {a - b.f, -b.fu, -b.fv, -b.fuv}; }
constexpr HyperDual operator*(const HyperDual& a, double b) { return {a.f * b, a.fu * b, a.fv * b, a.fuv * b}; }
constexpr HyperDual operator*(double a, const HyperDual& b) { return b * a; }
constexpr HyperDual operator/(const HyperDual& a, double b) { return a * (1.0 / b); }

inline HyperDual reciprocal(const HyperDual& x) {
  const double inv = 1.0 / x.f;
  return chain(x, inv, -inv * inv, 2.0 * inv * inv * inv);
}

inline HyperDual operator/(const HyperDual& a, const HyperDual& b) { return a * reciprocal(b); }
inline HyperDual operator/(double a, const HyperDual& b) { return a * reciprocal(b); }
inline HyperDual& HyperDual::operator/=(const HyperDual& o) { return *this = *this / o; }

inline HyperDual exp(const HyperDual& x) {
  const double e = std::exp(x.f);
  return chain(x, e, e, e);
}

inline HyperDual log(const HyperDual& x) {
  const double inv = 1.0 / x.f;
  return chain(x, std::log(x.f), inv, -inv * inv);
}

inline HyperDual sqrt(const HyperDual& x) {
  const double s = std::sqrt(x.f);
  return chain(x, s, 0.5 / s, -0.25 / (s * x.f));
}

inline HyperDual pow(const HyperDual& x, double p) {
  const double g = std::pow(x.f, p);
  return chain(x, g, p * std::pow(x.f, p - 1.0), p * (p - 1.0) * std::pow(x.f, p - 2.0));
}

inline HyperDual tanh(const HyperDual& x) {
  const double t = std::tanh(x.f);
  const double d = 1.0 - t * t;
  return chain(x, t, d, -2.0 * t * d);
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline HyperDual sigmoid(const HyperDual& x) {
  const double s = sigmoid(x.f);
  const double d = s * (1.0 - s);
  return chain(x, s, d, d * (1.0 - 2.0 * s));
}

/// max(x, floor). Below the floor the result is the constant; at the kink the
/// unclamped branch is kept so tangents keep flowing.
inline double floor_at(double x, double floor) { return x < floor ? floor : x; }
inline HyperDual floor_at(const HyperDual& x, double floor) { return x.f < floor ? HyperDual{floor} : x; }

inline double value_of(double x) { return x; }
inline double value_of(const HyperDual& x) { return x.f; }

inline bool isfinite(const HyperDual& x) {
  return std::isfinite(x.f) && std::isfinite(x.fu) && std::isfinite(x.fv) && std::isfinite(x.fuv);
}

inline std::ostream& operator<<(std::ostream& os, const HyperDual& x) {
  return os << '(' << x.f << ", " << x.fu << ", " << x.fv << ", " << x.fuv << ')';
}

}  // namespace bilevel
