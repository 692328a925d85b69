#include "bilevel/cg.hpp"

#include <cmath>
#include <string>
#include <utility>

#include "bilevel/errors.hpp"

namespace bilevel {

CgReport conjugate_gradient(const SpdOperator& A, const Eigen::VectorXd& b, int max_iters, double eps_cg,
                            const std::optional<Eigen::VectorXd>& initial) {
  if (b.size() != A.n) throw InvalidConfig("CG right-hand side has wrong dimension");
  if (max_iters < 1 || !(eps_cg > 0.0)) throw InvalidConfig("CG needs max_iters >= 1 and eps_cg > 0");
  if (!b.allFinite()) throw NumericalError("non-finite CG right-hand side", 0);

  Eigen::VectorXd v = initial ? *initial : Eigen::VectorXd::Zero(A.n);
  Eigen::VectorXd r = b - A.apply(v);
  Eigen::VectorXd p = r;
  double rho = r.squaredNorm();

  CgReport report;
  for (int it = 1; it <= max_iters; ++it) {
    if (std::sqrt(rho) <= eps_cg) break;
    const Eigen::VectorXd q = A.apply(p);
    const double curvature = p.dot(q);
    if (!std::isfinite(curvature)) throw NumericalError("non-finite CG curvature", it);
    if (curvature <= 0.0) throw CurvatureError(it, curvature);
    const double alpha = rho / curvature;
    v += alpha * p;
    r -= alpha * q;
    const double rho_new = r.squaredNorm();
    const double beta = rho_new / rho;
    p = r + beta * p;
    rho = rho_new;
    report.iterations = it;
  }
  if (!std::isfinite(rho) || !v.allFinite()) throw NumericalError("non-finite CG iterate", report.iterations);

  report.solution = std::move(v);
  report.final_residual_norm = std::sqrt(rho);
  report.converged = report.final_residual_norm <= eps_cg;
  return report;
}

SpdOperator damped(std::function<Eigen::VectorXd(const Eigen::VectorXd&)> hvp, Eigen::Index n, double lambda) {
  if (!(lambda >= 0.0)) throw InvalidConfig("damping must be non-negative");
  return {[hvp = std::move(hvp), lambda](const Eigen::VectorXd& v) -> Eigen::VectorXd {
            return -hvp(v) + lambda * v;
          },
          n};
}

}  // namespace bilevel
