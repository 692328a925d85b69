#pragma once

#include <cmath>
#include <functional>
#include <limits>

#include "bilevel/environment.hpp"

namespace bilevel::testing {

/// One-dimensional analytic model with utilities given as generic lambdas of (a, t).
template <class Principal, class Agent>
class ToyEnv final : public Environment {
 public:
  ToyEnv(Principal u1, Agent u2, double a_low = -std::numeric_limits<double>::infinity(),
         double a_high = std::numeric_limits<double>::infinity())
      : Environment(EnvSpec{"toy", {}, true, 0.0}), u1_(u1), u2_(u2), a_low_(a_low), a_high_(a_high) {}

  int action_dim() const override { return 1; }
  int contract_dim() const override { return 1; }
  bool linear() const override { return false; }
  std::vector<NoiseKind> noise() const override { return {}; }
  std::vector<std::string> contract_names() const override { return {"t"}; }
  Box action_box() const override { return {Vector::Constant(1, a_low_), Vector::Constant(1, a_high_)}; }

  Utilities<double> utilities(std::span<const double> a, std::span<const double> t,
                              std::span<const double>) const override {
    return {u1_(a[0], t[0]), u2_(a[0], t[0])};
  }
  Utilities<HyperDual> utilities(std::span<const HyperDual> a, std::span<const HyperDual> t,
                                 std::span<const double>) const override {
    return {u1_(a[0], t[0]), u2_(a[0], t[0])};
  }

 private:
  Principal u1_;
  Agent u2_;
  double a_low_, a_high_;
};

template <class P, class A>
ToyEnv<P, A> toy(P u1, A u2, double a_low = -std::numeric_limits<double>::infinity(),
                 double a_high = std::numeric_limits<double>::infinity()) {
  return ToyEnv<P, A>(u1, u2, a_low, a_high);
}

}  // namespace bilevel::testing
