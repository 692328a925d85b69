#pragma once

#include <functional>
#include <optional>

#include <Eigen/Core>

namespace bilevel {

/// Matrix-free symmetric positive definite operator.
struct SpdOperator {
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> apply;
  Eigen::Index n = 0;
};

struct CgReport {
  Eigen::VectorXd solution;
  int iterations = 0;
  double final_residual_norm = 0.0;
  bool converged = false;
};

/// Conjugate gradient from v = 0 (or the given initial guess). Stops once the residual
/// norm drops to eps_cg or after max_iters iterations and returns the last iterate.
/// Throws CurvatureError when <p, Ap> <= 0 and NumericalError on non-finite values.
CgReport conjugate_gradient(const SpdOperator& A, const Eigen::VectorXd& b, int max_iters, double eps_cg,
                            const std::optional<Eigen::VectorXd>& initial = std::nullopt);

/// v -> -hvp(v) + lambda v.
SpdOperator damped(std::function<Eigen::VectorXd(const Eigen::VectorXd&)> hvp, Eigen::Index n, double lambda);

}  // namespace bilevel
