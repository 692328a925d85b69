#pragma once

#include <concepts>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "bilevel/errors.hpp"
#include "bilevel/hyperdual.hpp"
#include "bilevel/qmc.hpp"

namespace bilevel {

using Vector = Eigen::VectorXd;

/// Per-sample objective phi(a, t, z), evaluable over plain reals and over HyperDual.
/// Sample averages run over the rows of a draw matrix; an analytic objective is
/// averaged over a single row with zero columns.
template <class F>
concept ScalarFn = requires(const F& fn, std::span<const double> x, std::span<const HyperDual> y) {
  { fn(x, x, x) } -> std::convertible_to<double>;
  { fn(y, y, x) } -> std::convertible_to<HyperDual>;
};

namespace detail {

enum class Slot { Value, U, UV };

inline std::span<const double> row(const SampleMatrix& draws, Eigen::Index i) {
  return {draws.data() + i * draws.cols(), static_cast<std::size_t>(draws.cols())};
}

inline void check_draws(const SampleMatrix& draws) {
  if (draws.rows() < 1) throw InvalidConfig("sample average over an empty batch");
}

/// Fixed-order mean of one HyperDual component over all samples.
template <ScalarFn Fn>
double seeded_mean(const Fn& fn, const std::vector<HyperDual>& a, const std::vector<HyperDual>& t,
                   const SampleMatrix& draws, Slot slot) {
  double sum = 0.0;
  for (Eigen::Index i = 0; i < draws.rows(); ++i) {
    const HyperDual y = fn(std::span<const HyperDual>(a), std::span<const HyperDual>(t), row(draws, i));
    if (!isfinite(y)) throw NumericalError("non-finite objective derivative", i);
    sum += slot == Slot::Value ? y.f : (slot == Slot::U ? y.fu : y.fuv);
  }
  return sum / static_cast<double>(draws.rows());
}

inline std::vector<HyperDual> lift(const Vector& x) {
  std::vector<HyperDual> out(static_cast<std::size_t>(x.size()));
  for (Eigen::Index i = 0; i < x.size(); ++i) out[i] = HyperDual{x[i]};
  return out;
}

}  // namespace detail

/// Sample average of fn over the rows of draws, summed in index order.
template <ScalarFn Fn>
double sample_mean(const Fn& fn, const Vector& a, const Vector& t, const SampleMatrix& draws) {
  detail::check_draws(draws);
  const std::span<const double> as(a.data(), a.size()), ts(t.data(), t.size());
  double sum = 0.0;
  for (Eigen::Index i = 0; i < draws.rows(); ++i) {
    const double y = fn(as, ts, detail::row(draws, i));
    if (!std::isfinite(y)) throw NumericalError("non-finite objective value", i);
    sum += y;
  }
  return sum / static_cast<double>(draws.rows());
}

/// Gradient of the sample average with respect to the action block.
template <ScalarFn Fn>
Vector grad_a(const Fn& fn, const Vector& a, const Vector& t, const SampleMatrix& draws) {
  detail::check_draws(draws);
  auto ah = detail::lift(a);
  const auto th = detail::lift(t);
  Vector g(a.size());
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    ah[i].fu = 1.0;
    g[i] = detail::seeded_mean(fn, ah, th, draws, detail::Slot::U);
    ah[i].fu = 0.0;
  }
  return g;
}

/// Gradient of the sample average with respect to the contract block.
template <ScalarFn Fn>
Vector grad_t(const Fn& fn, const Vector& a, const Vector& t, const SampleMatrix& draws) {
  detail::check_draws(draws);
  const auto ah = detail::lift(a);
  auto th = detail::lift(t);
  Vector g(t.size());
  for (Eigen::Index j = 0; j < t.size(); ++j) {
    th[j].fu = 1.0;
    g[j] = detail::seeded_mean(fn, ah, th, draws, detail::Slot::U);
    th[j].fu = 0.0;
  }
  return g;
}

/// Action-block Hessian times v: v goes in the v-slot, e_i in the u-slot, one pass per i.
template <ScalarFn Fn>
Vector hvp_aa(const Fn& fn, const Vector& a, const Vector& t, const SampleMatrix& draws, const Vector& v) {
  detail::check_draws(draws);
  if (v.size() != a.size()) throw InvalidConfig("HVP direction has wrong dimension");
  auto ah = detail::lift(a);
  const auto th = detail::lift(t);
  for (Eigen::Index k = 0; k < a.size(); ++k) ah[k].fv = v[k];
  Vector out(a.size());
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    ah[i].fu = 1.0;
    out[i] = detail::seeded_mean(fn, ah, th, draws, detail::Slot::UV);
    ah[i].fu = 0.0;
  }
  return out;
}

/// grad_t (grad_a(fn) . v): v seeds the action u-slot, e_j of t the v-slot.
template <ScalarFn Fn>
Vector mixed_hvp_ta(const Fn& fn, const Vector& a, const Vector& t, const SampleMatrix& draws,
                    const Vector& v) {
  detail::check_draws(draws);
  if (v.size() != a.size()) throw InvalidConfig("mixed HVP direction has wrong dimension");
  auto ah = detail::lift(a);
  auto th = detail::lift(t);
  for (Eigen::Index k = 0; k < a.size(); ++k) ah[k].fu = v[k];
  Vector out(t.size());
  for (Eigen::Index j = 0; j < t.size(); ++j) {
    th[j].fv = 1.0;
    out[j] = detail::seeded_mean(fn, ah, th, draws, detail::Slot::UV);
    th[j].fv = 0.0;
  }
  return out;
}

}  // namespace bilevel
