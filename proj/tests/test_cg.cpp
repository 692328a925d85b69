#include <doctest.h>

#include <random>

#include <Eigen/Dense>

#include "bilevel/cg.hpp"
#include "bilevel/errors.hpp"

using namespace bilevel;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

SpdOperator dense(const MatrixXd& a) {
  return {[a](const VectorXd& v) -> VectorXd { return a * v; }, a.rows()};
}

MatrixXd random_spd(int n, std::mt19937_64& engine) {
  std::normal_distribution<double> normal;
  MatrixXd m(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) m(i, j) = normal(engine);
  return m.transpose() * m + MatrixXd::Identity(n, n);
}

VectorXd random_vector(int n, std::mt19937_64& engine) {
  std::normal_distribution<double> normal;
  VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = normal(engine);
  return v;
}

}  // namespace

TEST_SUITE("cg") {
  TEST_CASE("identity converges in one iteration") {
    const VectorXd b = (VectorXd(3) << 1.0, -2.0, 0.5).finished();
    const CgReport report = conjugate_gradient(dense(MatrixXd::Identity(3, 3)), b, 20, 1e-12);
    CHECK(report.iterations == 1);
    CHECK(report.converged);
    CHECK(report.solution == b);
  }

  TEST_CASE("diagonal system") {
    const MatrixXd a = Eigen::Vector2d(2.0, 4.0).asDiagonal();
    const CgReport report = conjugate_gradient(dense(a), Eigen::Vector2d(2.0, 4.0), 20, 1e-12);
    CHECK(report.iterations <= 2);
    CHECK(report.solution.isApprox(Eigen::Vector2d(1.0, 1.0), 1e-14));
  }

  TEST_CASE("random SPD systems match a dense factorization") {
    std::mt19937_64 engine(7);
    for (const int n : {2, 8, 50}) {
      const MatrixXd a = random_spd(n, engine);
      const VectorXd b = random_vector(n, engine);
      const VectorXd direct = a.llt().solve(b);
      const CgReport report = conjugate_gradient(dense(a), b, 10 * n, 1e-10);
      CAPTURE(n);
      CHECK((report.solution - direct).norm() / direct.norm() <= 1e-6);
      CHECK(report.converged == (report.final_residual_norm <= 1e-10));
    }
  }

  TEST_CASE("small well-conditioned systems terminate within n iterations") {
    std::mt19937_64 engine(8);
    for (int n = 1; n <= 8; ++n) {
      MatrixXd a = MatrixXd::Identity(n, n) * 2.0;
      const MatrixXd m = random_spd(n, engine) * 0.05;
      a += m;
      const VectorXd b = random_vector(n, engine);
      const CgReport report = conjugate_gradient(dense(a), b, n, 1e-12);
      CAPTURE(n);
      CHECK(report.final_residual_norm <= 1e-10);
    }
  }

  TEST_CASE("energy norm of the error is non-increasing") {
    std::mt19937_64 engine(9);
    const int n = 8;
    const MatrixXd a = random_spd(n, engine);
    const VectorXd b = random_vector(n, engine);
    const VectorXd direct = a.llt().solve(b);
    double previous = std::numeric_limits<double>::infinity();
    for (int k = 1; k <= n; ++k) {
      const VectorXd e = conjugate_gradient(dense(a), b, k, 1e-14).solution - direct;
      const double energy = std::sqrt(e.dot(a * e));
      CHECK(energy <= previous * (1.0 + 1e-12) + 1e-14);
      previous = energy;
    }
  }

  TEST_CASE("damping bias vanishes as lambda decreases") {
    std::mt19937_64 engine(10);
    const int n = 6;
    const MatrixXd a = random_spd(n, engine);
    const VectorXd b = random_vector(n, engine);
    const auto hvp = [&a](const VectorXd& v) -> VectorXd { return -(a * v); };
    const VectorXd exact = conjugate_gradient(damped(hvp, n, 0.0), b, 100, 1e-14).solution;
    const double inverse_norm = 1.0 / Eigen::SelfAdjointEigenSolver<MatrixXd>(a).eigenvalues().minCoeff();

    double previous = std::numeric_limits<double>::infinity();
    for (const double lambda : {1e-2, 1e-4, 1e-6}) {
      const VectorXd v = conjugate_gradient(damped(hvp, n, lambda), b, 100, 1e-14).solution;
      const double bias = (v - exact).norm();
      CAPTURE(lambda);
      CHECK(bias < previous);
      CHECK(bias <= lambda * inverse_norm * exact.norm() * 1.01);
      previous = bias;
    }
  }

  TEST_CASE("damped operator") {
    const auto minus_identity = [](const VectorXd& v) -> VectorXd { return -v; };
    const VectorXd x = Eigen::Vector2d(0.3, -1.2);
    CHECK(damped(minus_identity, 2, 0.0).apply(x) == x);

    const auto hvp = [](const VectorXd& v) -> VectorXd { return -(Eigen::Vector2d(1.0, 2.0).cwiseProduct(v)); };
    const SpdOperator op = damped(hvp, 2, 0.5);
    CHECK(op.apply(Eigen::Vector2d(1.0, 1.0)).isApprox(Eigen::Vector2d(1.5, 2.5)));
    CHECK(op.n == 2);
    CHECK_THROWS_AS(damped(hvp, 2, -1.0), InvalidConfig);
  }

  TEST_CASE("non-positive curvature is reported with its iteration") {
    const MatrixXd a = Eigen::Vector2d(1.0, -1.0).asDiagonal();
    try {
      conjugate_gradient(dense(a), Eigen::Vector2d(0.0, 1.0), 10, 1e-12);
      FAIL("expected CurvatureError");
    } catch (const CurvatureError& e) {
      CHECK(e.iteration() == 1);
      CHECK(e.curvature() < 0.0);
    }
  }

  TEST_CASE("non-converged solves return the last iterate") {
    std::mt19937_64 engine(11);
    const MatrixXd a = random_spd(20, engine);
    const VectorXd b = random_vector(20, engine);
    const CgReport report = conjugate_gradient(dense(a), b, 2, 1e-12);
    CHECK(report.iterations == 2);
    CHECK_FALSE(report.converged);
    CHECK(report.final_residual_norm == doctest::Approx((b - a * report.solution).norm()).epsilon(1e-8));
  }

  TEST_CASE("warm start") {
    const MatrixXd a = Eigen::Vector3d(1.0, 2.0, 3.0).asDiagonal();
    const VectorXd b = Eigen::Vector3d(1.0, 1.0, 1.0);
    const VectorXd exact = a.llt().solve(b);
    const CgReport report = conjugate_gradient(dense(a), b, 10, 1e-12, exact);
    CHECK(report.iterations == 0);
    CHECK(report.solution == exact);
  }

  TEST_CASE("invalid input") {
    const SpdOperator op = dense(MatrixXd::Identity(2, 2));
    CHECK_THROWS_AS(conjugate_gradient(op, VectorXd::Ones(3), 10, 1e-10), InvalidConfig);
    CHECK_THROWS_AS(conjugate_gradient(op, VectorXd::Ones(2), 0, 1e-10), InvalidConfig);
    CHECK_THROWS_AS(conjugate_gradient(op, VectorXd::Constant(2, NAN), 10, 1e-10), NumericalError);
  }
}
