#include <doctest.h>

#include <cmath>

#include "bilevel/errors.hpp"
#include "bilevel/solver.hpp"
#include "toy_env.hpp"

using namespace bilevel;
using bilevel::testing::toy;

namespace {

const SampleMatrix kNone = Environment::analytic_draws();

ParamVec scalar(double x, double low = -INFINITY, double high = INFINITY, Block block = Block::Agent) {
  return {Vector::Constant(1, x), Vector::Constant(1, low), Vector::Constant(1, high), block};
}

auto tracking() {
  return toy([](auto a, auto t) { return a * t; }, [](auto a, auto t) { return -0.5 * (a - t) * (a - t); });
}

SolverConfig short_run(const Environment& env, long steps) {
  SolverConfig cfg = desk_profile(env);
  cfg.T_out = steps;
  cfg.log_every = 50;
  return cfg;
}

}  // namespace

TEST_SUITE("solver") {
  TEST_CASE("inner ascent reaches the agent's maximizer") {
    const auto env = tracking();
    SolverConfig cfg;
    cfg.eta_in = 0.5;
    cfg.T_in = 200;
    cfg.eps_in = 1e-10;
    const InnerResult r = inner_ascent(env, scalar(0.0), scalar(0.7, -INFINITY, INFINITY, Block::Contract), kNone, cfg);
    CHECK(r.a.values[0] == doctest::Approx(0.7).epsilon(1e-9));
    CHECK(r.grad_norm <= 1e-10);
    CHECK(r.steps < 200);
  }

  TEST_CASE("inner ascent stays inside the action box") {
    const auto env = tracking();
    SolverConfig cfg;
    cfg.eta_in = 0.5;
    cfg.T_in = 100;
    const InnerResult r =
        inner_ascent(env, scalar(0.1, 0.0, 0.5), scalar(2.0, -INFINITY, INFINITY, Block::Contract), kNone, cfg);
    CHECK(r.a.values[0] == 0.5);
    CHECK(r.a.feasible());
    CHECK(r.steps == 100);
  }

  TEST_CASE("inner ascent takes no step from a stationary point") {
    const auto env = tracking();
    const SolverConfig cfg;
    const InnerResult r = inner_ascent(env, scalar(0.3), scalar(0.3, -INFINITY, INFINITY, Block::Contract), kNone, cfg);
    CHECK(r.steps == 0);
    CHECK(r.a.values[0] == 0.3);
  }

  TEST_CASE("non-finite gradients report the inner step") {
    const auto env = toy([](auto a, auto) { return a; }, [](auto a, auto) {
      using std::log;
      return -log(a);
    });
    SolverConfig cfg;
    cfg.eta_in = 0.1;
    try {
      inner_ascent(env, scalar(0.05), scalar(0.0, -INFINITY, INFINITY, Block::Contract), kNone, cfg);
      FAIL("expected NumericalError");
    } catch (const NumericalError& e) {
      CHECK(e.where() == 1);
    }
  }

  TEST_CASE("hypergradient of the tracking model is 2t") {
    const auto env = tracking();
    SolverConfig cfg;
    cfg.lambda = 0.0;
    for (const double t : {-1.0, 0.0, 0.7, 3.0}) {
      const HypergradResult h = hypergrad(env, Vector::Constant(1, t), Vector::Constant(1, t), kNone, cfg);
      CHECK(h.gradient[0] == doctest::Approx(2.0 * t).epsilon(1e-14));
      CHECK(h.lambda_used == 0.0);
      CHECK_FALSE(h.clipped);
    }
  }

  TEST_CASE("hypergradient ignores the response when the principal does not depend on it") {
    const auto env = toy([](auto a, auto t) { return t * t + 0.0 * a; }, [](auto a, auto t) { return -(a - t) * (a - t); });
    const SolverConfig cfg;
    const HypergradResult h = hypergrad(env, Vector::Constant(1, 0.2), Vector::Constant(1, 1.5), kNone, cfg);
    CHECK(h.gradient[0] == doctest::Approx(3.0));
    CHECK(h.cg.solution.isZero());
  }

  TEST_CASE("hypergradient vanishes at the linear-quadratic optimum") {
    const auto env = make_environment("holmstrom_milgrom");
    const GroundTruth truth = env->closed_form();
    SolverConfig cfg;
    cfg.lambda = 0.0;
    CHECK(hypergrad(*env, truth.a_star, truth.t_star, kNone, cfg).gradient.norm() <= 1e-12);
  }

  TEST_CASE("curvature failures are retried once with more damping") {
    const auto nearly_flat =
        toy([](auto a, auto t) { return a * t; }, [](auto a, auto) { return 0.5 * 5e-4 * a * a; });
    SolverConfig cfg;
    cfg.lambda = 1e-4;
    const HypergradResult h = hypergrad(nearly_flat, Vector::Constant(1, 0.4), Vector::Constant(1, 1.0), kNone, cfg);
    CHECK(h.lambda_used == doctest::Approx(1e-3));
    CHECK(h.gradient.allFinite());

    const auto convex = toy([](auto a, auto t) { return a * t; }, [](auto a, auto) { return a * a; });
    CHECK_THROWS_AS(hypergrad(convex, Vector::Constant(1, 0.4), Vector::Constant(1, 1.0), kNone, cfg), CurvatureError);
  }

  TEST_CASE("gradient clipping") {
    const auto env = tracking();
    SolverConfig cfg;
    cfg.lambda = 0.0;
    cfg.clip_norm = 1.0;
    const HypergradResult h = hypergrad(env, Vector::Constant(1, 3.0), Vector::Constant(1, 3.0), kNone, cfg);
    CHECK(h.clipped);
    CHECK(h.gradient[0] == doctest::Approx(1.0));
    CHECK_FALSE(hypergrad(env, Vector::Constant(1, 0.1), Vector::Constant(1, 0.1), kNone, cfg).clipped);
  }

  TEST_CASE("contract update holds coordinates pushing out of the box") {
    SolverConfig cfg;
    cfg.eta_out = 0.1;
    const ParamVec t{Vector{{0.0, 1.0, 0.5}}, Vector{{0.0, 0.0, 0.0}}, Vector{{1.0, 1.0, 1.0}}, Block::Contract};
    const ParamVec next = update_contract(t, Vector{{-1.0, 1.0, 10.0}}, cfg);
    CHECK(next.values[0] == 0.0);
    CHECK(next.values[1] == 1.0);
    CHECK(next.values[2] == 1.0);  // projected
    const ParamVec inward = update_contract(t, Vector{{1.0, -1.0, -1.0}}, cfg);
    CHECK(inward.values[0] == doctest::Approx(0.1));
    CHECK(inward.values[1] == doctest::Approx(0.9));
    CHECK(inward.values[2] == doctest::Approx(0.4));
    CHECK_THROWS_AS(update_contract(t, Vector{{1.0}}, cfg), InvalidConfig);
  }

  TEST_CASE("configuration validation names the field") {
    SolverConfig cfg;
    cfg.eta_in = 0.0;
    CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("solver.eta_in"), InvalidConfig);
    cfg = SolverConfig{};
    cfg.batch_n = 1023;
    CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("solver.batch_n"), InvalidConfig);
    cfg = SolverConfig{};
    cfg.lambda = -1.0;
    CHECK_THROWS_AS(cfg.validate(), InvalidConfig);
    cfg = SolverConfig{};
    cfg.T_out = 0;
    CHECK_NOTHROW(cfg.validate());
  }

  TEST_CASE("desk profile") {
    const SolverConfig linear = desk_profile(*make_environment("insurance"));
    CHECK(linear.eta_out == 1e-2);
    CHECK(linear.T_out == 20'000);
    const SolverConfig nonlinear = desk_profile(*make_environment("poisson"));
    CHECK(nonlinear.eta_out == 1e-3);
    CHECK(nonlinear.T_out == 50'000);
    CHECK(nonlinear.T_in == 50);
    CHECK(nonlinear.batch_n == 1024);
  }

  TEST_CASE("initial state is seeded and feasible") {
    const auto env = make_environment("logistic");
    const auto [a, t] = initial_state(*env, 5);
    const auto [a2, t2] = initial_state(*env, 5);
    CHECK(a.values == a2.values);
    CHECK(t.values == t2.values);
    CHECK(a.feasible());
    CHECK(t.feasible());
    CHECK(t.block == Block::Contract);
    CHECK(initial_state(*env, 6).second.values != t.values);
  }

  TEST_CASE("zero outer steps return the initial point") {
    const auto env = make_environment("holmstrom_milgrom");
    const auto [a0, t0] = initial_state(*env, 1);
    SolverConfig cfg = desk_profile(*env);
    cfg.T_out = 0;
    const OuterResult r = outer_loop(*env, t0, a0, cfg, env->closed_form());
    CHECK(r.trace.empty());
    CHECK(r.t.values == t0.values);
    CHECK(r.a.values == a0.values);
  }

  TEST_CASE("outer loop converges on the linear-quadratic model") {
    const auto env = make_environment("holmstrom_milgrom");
    const GroundTruth truth = env->closed_form();
    const auto [a0, t0] = initial_state(*env, 1);
    const OuterResult r = outer_loop(*env, t0, a0, short_run(*env, 2000), truth);
    REQUIRE(r.trace.size() == 40);
    CHECK(r.trace.back().step == 2000);
    CHECK(*r.trace.back().metrics.err_t <= 1e-3);
    const double u1_start = compute_metrics(a0.values, t0.values, truth, *env, kNone).u1;
    CHECK(r.trace.back().metrics.u1 > u1_start);
    // Monotone until the error reaches the damping bias of order lambda.
    for (std::size_t i = 1; i < r.trace.size() && *r.trace[i - 1].metrics.err_t > 1e-3; ++i) {
      CHECK(*r.trace[i].metrics.err_t <= *r.trace[i - 1].metrics.err_t);
    }
    for (const auto& row : r.trace) CHECK(row.feasible);
  }

  TEST_CASE("sampled runs are deterministic and stay in their boxes") {
    const auto env = make_environment("logistic");
    const auto [a0, t0] = initial_state(*env, 3);
    SolverConfig cfg = short_run(*env, 300);
    cfg.log_every = 100;
    std::vector<long> seen;
    const OuterResult first = outer_loop(*env, t0, a0, cfg, std::nullopt, [&](const TraceRow& row) { seen.push_back(row.step); });
    const OuterResult second = outer_loop(*env, t0, a0, cfg);
    CHECK(seen == std::vector<long>{100, 200, 300});
    CHECK(first.t.values == second.t.values);
    CHECK(first.a.values == second.a.values);
    for (std::size_t i = 0; i < first.trace.size(); ++i) {
      CHECK(first.trace[i].metrics.u1 == second.trace[i].metrics.u1);
      CHECK(first.trace[i].feasible);
      CHECK_FALSE(first.trace[i].metrics.err_t.has_value());
    }
    CHECK(first.t.feasible());
  }

  TEST_CASE("last row is logged even off the logging cadence") {
    const auto env = make_environment("insurance");
    const auto [a0, t0] = initial_state(*env, 1);
    SolverConfig cfg = short_run(*env, 120);
    const OuterResult r = outer_loop(*env, t0, a0, cfg);
    REQUIRE(r.trace.size() == 3);
    CHECK(r.trace[1].step == 100);
    CHECK(r.trace[2].step == 120);
  }

  TEST_CASE("infeasible starting points are rejected") {
    const auto env = make_environment("logistic");
    auto [a0, t0] = initial_state(*env, 1);
    t0.values[0] = 0.0;  // below w_min
    CHECK_THROWS_AS(outer_loop(*env, t0, a0, short_run(*env, 10)), InvalidConfig);
  }
}
