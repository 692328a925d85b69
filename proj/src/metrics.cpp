#include "bilevel/metrics.hpp"

#include <cmath>

#include "bilevel/autodiff.hpp"
#include "bilevel/cg.hpp"
#include "bilevel/errors.hpp"

namespace bilevel {

namespace {

double relative(double reference, double value) {
  return std::fabs(reference - value) / (std::fabs(reference) + kMetricEps);
}

}  // namespace

Vector refined_best_response(const Environment& env, const Vector& t, const Vector& start,
                             const SampleMatrix& draws) {
  if (env.linear()) return env.best_response(t);

  const Objective agent{&env, Party::Agent};
  const Box box = env.action_box();
  Vector a = box.project(start);
  double value = sample_mean(agent, a, t, draws);

  for (int it = 0; it < 100; ++it) {
    const Vector g = grad_a(agent, a, t, draws);
    if (g.norm() <= 1e-10) break;

    Vector direction = g;
    try {
      auto hessian = [&](const Vector& v) { return hvp_aa(agent, a, t, draws, v); };
      const auto report = conjugate_gradient(damped(hessian, a.size(), 1e-10), g, 4 * static_cast<int>(a.size()), 1e-14);
      direction = report.solution;
    } catch (const CurvatureError&) {
      // not concave here: plain ascent direction
    }

    bool improved = false;
    for (double step = 1.0; step > 1e-12; step *= 0.5) {
      const Vector candidate = box.project(a + step * direction);
      const double candidate_value = sample_mean(agent, candidate, t, draws);
      if (candidate_value > value) {
        improved = (candidate - a).norm() > 0.0;
        a = candidate;
        value = candidate_value;
        break;
      }
    }
    if (!improved) break;
  }
  return a;
}

MetricEvaluator::MetricEvaluator(const Environment& env, std::optional<GroundTruth> truth, SampleMatrix held_out)
    : env_(&env), truth_(std::move(truth)), held_out_(std::move(held_out)) {
  if (truth_) u1_star_ = eval_u(env, truth_->a_star, truth_->t_star, held_out_).principal;
}

Metrics MetricEvaluator::evaluate(const Vector& a, const Vector& t) const {
  Metrics m;
  const auto u = eval_u(*env_, a, t, held_out_);
  m.u1 = u.principal;
  m.u2 = u.agent;

  if (truth_) {
    m.err_a = (a - truth_->a_star).norm() / (truth_->a_star.norm() + kMetricEps);
    m.err_t = (t - truth_->t_star).norm() / (truth_->t_star.norm() + kMetricEps);
    m.gap_u1 = relative(u1_star_, m.u1);
  }
  const Vector response = refined_best_response(*env_, t, a, held_out_);
  m.gap_u2 = relative(eval_u(*env_, response, t, held_out_).agent, m.u2);
  return m;
}

Metrics compute_metrics(const Vector& a, const Vector& t, const std::optional<GroundTruth>& truth,
                        const Environment& env, const SampleMatrix& held_out) {
  return MetricEvaluator(env, truth, held_out).evaluate(a, t);
}

}  // namespace bilevel
