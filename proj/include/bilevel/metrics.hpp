#pragma once

#include <optional>

#include "bilevel/environment.hpp"

namespace bilevel {

inline constexpr double kMetricEps = 1e-12;

/// Held-out utilities and the four relative metrics. Metrics that need a reference
/// optimum are absent when none is known.
struct Metrics {
  double u1 = 0.0;
  double u2 = 0.0;
  std::optional<double> err_a;
  std::optional<double> err_t;
  std::optional<double> gap_u1;
  std::optional<double> gap_u2;
};

/// Agent best response to t on the given draws: closed form for linear environments,
/// otherwise projected Newton from `start` with gradient fallback.
Vector refined_best_response(const Environment& env, const Vector& t, const Vector& start, const SampleMatrix& draws);

/// Evaluates metrics against a fixed reference on a fixed held-out draw matrix.
class MetricEvaluator {
 public:
  MetricEvaluator(const Environment& env, std::optional<GroundTruth> truth, SampleMatrix held_out);

  Metrics evaluate(const Vector& a, const Vector& t) const;
  const SampleMatrix& held_out() const { return held_out_; }

 private:
  const Environment* env_;
  std::optional<GroundTruth> truth_;
  SampleMatrix held_out_;
  double u1_star_ = 0.0;
};

Metrics compute_metrics(const Vector& a, const Vector& t, const std::optional<GroundTruth>& truth,
                        const Environment& env, const SampleMatrix& held_out);

}  // namespace bilevel
