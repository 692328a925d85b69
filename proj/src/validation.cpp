#include "bilevel/validation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <random>
#include <sstream>

#include <Eigen/Dense>

#include "bilevel/bench.hpp"
#include "bilevel/errors.hpp"
#include "bilevel/oracle.hpp"

namespace bilevel {

namespace {

std::string sci(double value) {
  char buffer[32];
  std::snprintf(buffer, sizeof buffer, "%.3g", value);
  return buffer;
}

// u2 = -(a - t)^2 / 2, u1 = a t: the best response is a = t and d/dt u1(t, t) = 2t.
class ToyEnvironment final : public Environment {
 public:
  ToyEnvironment() : Environment(EnvSpec{"toy", {}, true, 0.0}) {}
  int action_dim() const override { return 1; }
  int contract_dim() const override { return 1; }
  bool linear() const override { return false; }
  std::vector<NoiseKind> noise() const override { return {}; }
  std::vector<std::string> contract_names() const override { return {"t"}; }

  Utilities<double> utilities(std::span<const double> a, std::span<const double> t,
                              std::span<const double>) const override {
    return evaluate(a, t);
  }
  Utilities<HyperDual> utilities(std::span<const HyperDual> a, std::span<const HyperDual> t,
                                 std::span<const double>) const override {
    return evaluate(a, t);
  }

 private:
  template <class T>
  static Utilities<T> evaluate(std::span<const T> a, std::span<const T> t) {
    const T gap = a[0] - t[0];
    return {a[0] * t[0], -0.5 * gap * gap};
  }
};

// Largest value seen and where; NaN counts as the largest.
struct Worst {
  double value = 0.0;
  std::string where;

  void add(double v, const std::string& label) {
    if (where.empty() || std::isnan(v) || (!std::isnan(value) && v > value)) {
      value = v;
      where = label;
    }
  }
};

double relative_error(const Vector& estimate, const Vector& reference) {
  return (estimate - reference).norm() / std::max(reference.norm(), 1e-3);
}

struct Runner {
  const ValidationOptions& options;
  const std::function<void(const CriterionResult&)>& on_result;
  ValidationReport report;
  // Bound checks gathered from every solver trace produced by the suite.
  long feasibility_rows = 0;
  long infeasible_rows = 0;
  std::vector<std::pair<std::string, GroundTruth>> oracles;

  bool selected(const std::string& id) const {
    return options.only.empty() || std::find(options.only.begin(), options.only.end(), id) != options.only.end();
  }

  void note(const std::string& message) const {
    if (options.progress) options.progress(message);
  }

  void record_trace(const RunTrace& trace) {
    for (const auto& row : trace) {
      ++feasibility_rows;
      if (!row.feasible) ++infeasible_rows;
    }
  }

  template <class Check>
  void criterion(const std::string& id, const std::string& title, Check check) {
    if (!selected(id)) return;
    note("running " + id + ": " + title);
    const auto start = std::chrono::steady_clock::now();
    CriterionResult result{id, title, false, "", 0.0};
    try {
      std::tie(result.pass, result.detail) = check();
    } catch (const std::exception& e) {
      result.pass = false;
      result.detail = std::string("exception: ") + e.what();
    }
    result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    report.results.push_back(result);
    if (on_result) on_result(result);
  }

  OuterResult solve(const Environment& env, const SolverConfig& cfg, const std::optional<GroundTruth>& truth,
                    std::uint64_t init_seed = 1) {
    auto [a0, t0] = initial_state(env, init_seed);
    OuterResult result = outer_loop(env, t0, a0, cfg, truth);
    record_trace(result.trace);
    return result;
  }

  // Sobol points against frozen Joe-Kuo reference values (indices 1, 2, 4, 8, 1000).
  std::pair<bool, std::string> sobol_reference() {
    static const double index2[16] = {0.75, 0.25, 0.25, 0.25, 0.75, 0.75, 0.25, 0.75,
                                      0.75, 0.75, 0.75, 0.75, 0.25, 0.25, 0.75, 0.25};
    static const double index4[16] = {0.375, 0.375, 0.625, 0.875, 0.375, 0.125, 0.375, 0.875,
                                      0.875, 0.625, 0.875, 0.375, 0.375, 0.625, 0.375, 0.875};
    static const double index8[16] = {0.1875, 0.3125, 0.9375, 0.4375, 0.5625, 0.3125, 0.4375, 0.9375,
                                      0.9375, 0.3125, 0.6875, 0.0625, 0.9375, 0.9375, 0.8125, 0.9375};
    static const double index1000[16] = {0.2197265625, 0.0966796875, 0.5185546875, 0.6767578125,
                                         0.2802734375, 0.9072265625, 0.0458984375, 0.8994140625,
                                         0.5009765625, 0.0693359375, 0.0849609375, 0.2548828125,
                                         0.1611328125, 0.3837890625, 0.1435546875, 0.3701171875};
    const SobolDirections& reference = SobolDirections::joe_kuo();
    const SobolDirections directions = options.corrupt_sobol ? reference.flipped(1, 1, 50) : reference;
    const SampleMatrix points = sobol_points(kMaxSobolDim, 1000, 0, directions);

    int mismatches = 0;
    auto compare = [&](int row, const double* expected) {
      for (int j = 0; j < kMaxSobolDim; ++j) mismatches += points(row, j) != expected[j];
    };
    for (int j = 0; j < kMaxSobolDim; ++j) mismatches += points(0, j) != 0.5;
    compare(1, index2);
    compare(3, index4);
    compare(7, index8);
    compare(999, index1000);
    return {mismatches == 0, std::to_string(mismatches) + " of 80 reference coordinates differ"};
  }

  std::pair<bool, std::string> closed_form_recovery() {
    bool pass = true;
    std::ostringstream detail;
    for (const std::string id : {"holmstrom_milgrom", "insurance", "imperfect_measurement", "two_signals",
                                 "multitask", "relative_performance"}) {
      const auto env = make_environment(id);
      const SolverConfig cfg = desk_profile(*env);
      const OuterResult result = solve(*env, cfg, env->closed_form());
      const Metrics& m = result.trace.back().metrics;
      const bool ok = *m.err_t <= tolerance::kRecoveryErrT && *m.err_a <= tolerance::kRecoveryErrA &&
                      *m.gap_u1 <= tolerance::kRecoveryGapU1;
      pass = pass && ok;
      detail << id << " err_t=" << sci(*m.err_t) << " err_a=" << sci(*m.err_a) << " gap_u1=" << sci(*m.gap_u1)
             << (ok ? "; " : " FAIL; ");
    }
    return {pass, detail.str()};
  }

  std::pair<bool, std::string> sampled_recovery() {
    const auto env = make_environment("holmstrom_milgrom", {}, false);
    const SolverConfig cfg = desk_profile(*env);
    const OuterResult result = solve(*env, cfg, env->closed_form());
    const Metrics& m = result.trace.back().metrics;
    const bool pass = *m.err_t <= tolerance::kSampledErrT && *m.gap_u1 <= tolerance::kSampledGapU1;
    return {pass, "err_t=" + sci(*m.err_t) + " (<= " + sci(tolerance::kSampledErrT) + ") gap_u1=" + sci(*m.gap_u1) +
                      " (<= " + sci(tolerance::kSampledGapU1) + ")"};
  }

  std::pair<bool, std::string> hypergradient_oracle() {
    const ToyEnvironment toy;
    const SampleMatrix none = Environment::analytic_draws();
    const double t = 0.7;
    const Vector tv = Vector::Constant(1, t);
    SolverConfig cfg;
    cfg.lambda = 0.0;
    const double exact = std::abs(hypergrad(toy, tv, tv, none, cfg).gradient[0] - 2.0 * t);
    cfg.lambda = 1e-4;
    const double damped = std::abs(hypergrad(toy, tv, tv, none, cfg).gradient[0] - 2.0 * t);

    // Total derivative of b -> u1(a*(b), b) on the linear-quadratic model, inner problem re-solved.
    const auto hm = make_environment("holmstrom_milgrom");
    SolverConfig inner;
    inner.eta_in = 0.5;
    inner.T_in = 10'000;
    inner.eps_in = 1e-13;
    inner.lambda = 1e-6;
    auto response = [&](double b) {
      const ParamVec t_b = ParamVec::within(hm->contract_box(), Vector::Constant(1, b), Block::Contract);
      const ParamVec a0 = ParamVec::within(hm->action_box(), Vector::Zero(1), Block::Agent);
      return inner_ascent(*hm, a0, t_b, none, inner).a.values;
    };
    auto outer_value = [&](double b) { return eval_u(*hm, response(b), Vector::Constant(1, b), none).principal; };
    const double b = 0.6, delta = 1e-4;
    const double fd = (outer_value(b + delta) - outer_value(b - delta)) / (2.0 * delta);
    const double h = hypergrad(*hm, response(b), Vector::Constant(1, b), none, inner).gradient[0];
    const double total = std::abs(h - fd) / std::abs(fd);

    const bool pass = exact <= tolerance::kToyExact && damped <= tolerance::kToyDamped &&
                      total <= tolerance::kTotalDerivative;
    return {pass, "toy |h-2t| lambda=0: " + sci(exact) + ", lambda=1e-4: " + sci(damped) +
                      "; linear-quadratic total-derivative rel. err " + sci(total)};
  }

  std::pair<bool, std::string> cg_correctness() {
    std::mt19937_64 engine(42);
    std::normal_distribution<double> normal;
    auto random_matrix = [&](int n) {
      Eigen::MatrixXd m(n, n);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) m(i, j) = normal(engine);
      return m;
    };
    auto random_vector = [&](int n) {
      Eigen::VectorXd v(n);
      for (int i = 0; i < n; ++i) v[i] = normal(engine);
      return v;
    };

    double worst = 0.0;
    bool monotone = true;
    for (const int n : {2, 8, 50}) {
      const Eigen::MatrixXd m = random_matrix(n);
      const Eigen::MatrixXd a = m.transpose() * m + Eigen::MatrixXd::Identity(n, n);
      const Eigen::VectorXd b = random_vector(n);
      const SpdOperator op{[a](const Eigen::VectorXd& v) -> Eigen::VectorXd { return a * v; }, n};
      const Eigen::VectorXd direct = a.llt().solve(b);
      const CgReport report = conjugate_gradient(op, b, 10 * n, 1e-10);
      worst = std::max(worst, (report.solution - direct).norm() / direct.norm());

      if (n == 8) {
        double previous = std::numeric_limits<double>::infinity();
        for (int k = 1; k <= n; ++k) {
          const Eigen::VectorXd e = conjugate_gradient(op, b, k, 1e-10).solution - direct;
          const double energy = std::sqrt(e.dot(a * e));
          if (energy > previous * (1.0 + 1e-12) + 1e-14) monotone = false;
          previous = energy;
        }
      }
    }
    const bool pass = worst <= tolerance::kCgRelative && monotone;
    return {pass, "max rel. err vs Cholesky " + sci(worst) + " (n = 2, 8, 50); A-norm error " +
                      (monotone ? "monotone" : "NOT monotone") + " on n = 8"};
  }

  std::pair<bool, std::string> derivative_suite() {
    Worst grad, hvp, sym;
    std::mt19937_64 engine(11);
    std::uniform_real_distribution<double> unit(0.05, 0.95);
    auto interior = [&](const Box& box, double free_low, double free_high) {
      Vector x(box.lower.size());
      for (Eigen::Index i = 0; i < x.size(); ++i) {
        const bool bounded = std::isfinite(box.lower[i]) && std::isfinite(box.upper[i]);
        const double low = bounded ? box.lower[i] : free_low, high = bounded ? box.upper[i] : free_high;
        x[i] = low + (high - low) * unit(engine);
      }
      return x;
    };
    auto unit_vector = [&](Eigen::Index n) {
      Vector v(n);
      for (Eigen::Index i = 0; i < n; ++i) v[i] = 2.0 * unit(engine) - 1.0;
      return v;
    };

    const double h = 1e-5;
    int configurations = 0;
    for (const auto& id : environment_ids()) {
      for (const bool sampled : {false, true}) {
        std::unique_ptr<Environment> env;
        if (sampled) {
          env = make_environment(id, {}, false);
        } else {
          env = make_environment(id);
          if (!env->analytic()) continue;
        }
        ++configurations;
        const std::string label = id + (env->analytic() ? "/analytic" : "/sampled");
        const SampleMatrix draws =
            env->analytic() ? Environment::analytic_draws() : env->draws(make_payload(3, env->noise_dim(), 256, true));

        for (int point = 0; point < 10; ++point) {
          const Vector a = interior(env->action_box(), -1.0, 1.5);
          Vector t = interior(env->contract_box(), 0.1, 1.5);
          if (!env->linear()) t[0] = std::max(t[0], env->contract_box().lower[0] + 0.05);
          const Vector v = unit_vector(a.size()), w = unit_vector(a.size());

          for (const Party party : {Party::Principal, Party::Agent}) {
            const Objective fn{env.get(), party};
            auto value = [&](const Vector& aa, const Vector& tt) { return sample_mean(fn, aa, tt, draws); };
            Vector fd_a(a.size()), fd_t(t.size());
            for (Eigen::Index i = 0; i < a.size(); ++i) {
              Vector up = a, down = a;
              up[i] += h;
              down[i] -= h;
              fd_a[i] = (value(up, t) - value(down, t)) / (2.0 * h);
            }
            for (Eigen::Index j = 0; j < t.size(); ++j) {
              Vector up = t, down = t;
              up[j] += h;
              down[j] -= h;
              fd_t[j] = (value(a, up) - value(a, down)) / (2.0 * h);
            }
            grad.add(relative_error(grad_a(fn, a, t, draws), fd_a), label + " grad_a");
            grad.add(relative_error(grad_t(fn, a, t, draws), fd_t), label + " grad_t");

            const Vector fd_hvp = (grad_a(fn, a + h * v, t, draws) - grad_a(fn, a - h * v, t, draws)) / (2.0 * h);
            hvp.add(relative_error(hvp_aa(fn, a, t, draws, v), fd_hvp), label + " hvp_aa");

            Vector fd_mixed(t.size());
            for (Eigen::Index j = 0; j < t.size(); ++j) {
              Vector up = t, down = t;
              up[j] += h;
              down[j] -= h;
              fd_mixed[j] = (grad_a(fn, a, up, draws).dot(v) - grad_a(fn, a, down, draws).dot(v)) / (2.0 * h);
            }
            hvp.add(relative_error(mixed_hvp_ta(fn, a, t, draws, v), fd_mixed), label + " mixed_hvp_ta");

            const double vhw = v.dot(hvp_aa(fn, a, t, draws, w)), whv = w.dot(hvp_aa(fn, a, t, draws, v));
            sym.add(std::abs(vhw - whv) / std::max(1.0, std::abs(vhw)), label + " symmetry");
          }
        }
      }
    }
    const bool pass =
        grad.value <= tolerance::kGradient && hvp.value <= tolerance::kHvp && sym.value <= tolerance::kSymmetry;
    return {pass, std::to_string(configurations) + " environment modes x 10 points; max rel. err gradients " +
                      sci(grad.value) + " (" + grad.where + "), HVPs " + sci(hvp.value) + " (" + hvp.where +
                      "), symmetry " + sci(sym.value)};
  }

  std::pair<bool, std::string> crn_determinism() {
    RunConfig cfg;
    cfg.env = make_environment("holmstrom_milgrom", {}, false)->spec();
    cfg.solver = desk_profile(*make_environment(cfg.env));
    cfg.solver.T_out = 2'000;
    cfg.name = "determinism";
    std::vector<std::string> contents;
    for (const char* sub : {"first", "second"}) {
      BenchOptions options;
      options.out_dir = options_dir(sub);
      const RunOutcome outcome = run(cfg, options);
      record_trace(outcome.result.trace);
      std::ifstream in(outcome.trace_path, std::ios::binary);
      contents.emplace_back(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    }
    const bool pass = contents[0] == contents[1] && contents[0].size() > 0;
    return {pass, "two sampled linear-quadratic runs (2000 steps): trace files " +
                      std::string(pass ? "bitwise identical" : "DIFFER") + " (" + std::to_string(contents[0].size()) +
                      " bytes)"};
  }

  std::filesystem::path options_dir(const std::string& sub) const { return options.work_dir / sub; }

  GroundTruth nonlinear_oracle(const std::string& id, bool fresh, double* seconds) {
    const auto env = make_environment(id);
    const GridSpec grid = GridSpec::for_environment(*env);
    const RunConfig defaults;
    const auto start = std::chrono::steady_clock::now();
    GroundTruth truth;
    if (options.oracle_cache && !fresh) {
      const OracleCache cache(*options.oracle_cache);
      truth = cached_grid_search(*env, grid, defaults.oracle_seed, &cache);
    } else {
      truth = grid_search(*env, grid, defaults.oracle_seed);
      if (options.oracle_cache) {
        const OracleCache cache(*options.oracle_cache);
        cache.store(OracleCache::key(*env, grid, defaults.oracle_seed), truth);
      }
    }
    if (seconds) *seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    oracles.emplace_back(id, truth);
    return truth;
  }

  std::pair<bool, std::string> oracle_sanity() {
    const auto hm = make_environment("holmstrom_milgrom");
    GridSpec grid;
    grid.contract_box = {{0.0, 2.0}};
    grid.contract_resolution = 401;
    grid.action_box = {0.0, 2.0};
    grid.action_resolution = 401;
    const GroundTruth linear = grid_search(*hm, grid, 7);
    const double miss = std::abs(linear.t_star[0] - hm->closed_form().t_star[0]);

    double seconds = 0.0;
    const GroundTruth logistic = nonlinear_oracle("logistic", true, &seconds);
    const Box box = make_environment("logistic")->action_box();
    const bool bounded = std::isfinite(logistic.u1_star) && box.contains(logistic.a_star);

    const bool pass = miss <= tolerance::kOracleHalfCell && seconds <= tolerance::kOracleSeconds && bounded;
    return {pass, "linear-quadratic |b_grid - b*| = " + sci(miss) + " (<= " + sci(tolerance::kOracleHalfCell) +
                      "); logistic 100x100x200 x 8192 oracle " + sci(seconds) + " s (<= 600), a* = " +
                      sci(logistic.a_star[0]) + (bounded ? " inside" : " OUTSIDE") + " the action box"};
  }

  std::pair<bool, std::string> utility_consistency() {
    bool pass = true;
    std::ostringstream detail;
    for (const std::string id : {"logistic", "sqrt_logistic", "laplace_threshold", "poisson"}) {
      const auto found = std::find_if(oracles.begin(), oracles.end(), [&](const auto& o) { return o.first == id; });
      const GroundTruth truth = found != oracles.end() ? found->second : nonlinear_oracle(id, false, nullptr);
      const auto env = make_environment(id);
      const SolverConfig cfg = desk_profile(*env);
      note("  solving " + id);
      const OuterResult result = solve(*env, cfg, truth);
      const double u1_solver = result.trace.back().metrics.u1;
      const double shortfall = truth.u1_star - u1_solver;
      const double allowed = tolerance::kUtilityConsistency * (std::abs(truth.u1_star) + kMetricEps);
      const bool ok = shortfall <= allowed;
      pass = pass && ok;
      // Diagnostic only: the oracle contract evaluated at the agent's exact best response.
      const SampleMatrix held = held_out_draws(*env, cfg);
      const Vector response = refined_best_response(*env, truth.t_star, truth.a_star, held);
      const double u1_exact = eval_u(*env, response, truth.t_star, held).principal;
      detail << id << " u1_oracle=" << sci(truth.u1_star) << " u1_solver=" << sci(u1_solver)
             << " shortfall=" << sci(shortfall) << " allowed=" << sci(allowed)
             << " u1_oracle_contract_exact_response=" << sci(u1_exact) << (ok ? "; " : " FAIL; ");
    }
    return {pass, detail.str()};
  }

  std::pair<bool, std::string> feasibility_and_fixed_points() {
    const double lambda = options.fixed_point_lambda.value_or(1e-6);
    double worst = 0.0;
    std::string where;
    for (const std::string id : {"holmstrom_milgrom", "insurance", "imperfect_measurement", "two_signals",
                                 "multitask", "relative_performance"}) {
      const auto env = make_environment(id);
      const GroundTruth truth = env->closed_form();
      SolverConfig cfg;
      cfg.lambda = lambda;
      const double norm =
          hypergrad(*env, truth.a_star, truth.t_star, Environment::analytic_draws(), cfg).gradient.norm();
      if (norm >= worst) {
        worst = norm;
        where = id;
      }
    }
    const bool feasible = infeasible_rows == 0;
    const bool pass = feasible && worst <= tolerance::kFixedPoint;
    return {pass, std::to_string(feasibility_rows - infeasible_rows) + "/" + std::to_string(feasibility_rows) +
                      " trace rows within bounds; max |hypergradient| at closed-form optima " + sci(worst) + " (" +
                      where + ", lambda=" + sci(lambda) + ")"};
  }
};

}  // namespace

bool ValidationReport::all_pass() const {
  return std::all_of(results.begin(), results.end(), [](const CriterionResult& r) { return r.pass; });
}

ValidationReport run_validation(const ValidationOptions& options,
                                const std::function<void(const CriterionResult&)>& on_result) {
  static const std::vector<std::string> ids{"sobol", "P1", "P2", "P3", "P4", "P5", "P6", "P7", "P8", "P9"};
  for (const auto& id : options.only) {
    if (std::find(ids.begin(), ids.end(), id) == ids.end()) throw InvalidConfig("unknown check '" + id + "'");
  }
  std::filesystem::create_directories(options.work_dir);

  Runner r{options, on_result, {}, 0, 0, {}};
  r.criterion("sobol", "Sobol points match Joe-Kuo reference values", [&] { return r.sobol_reference(); });
  r.criterion("P1", "closed-form recovery, analytic linear environments", [&] { return r.closed_form_recovery(); });
  r.criterion("P2", "closed-form recovery, sampled linear-quadratic model", [&] { return r.sampled_recovery(); });
  r.criterion("P3", "hypergradient against analytic and finite-difference oracles",
              [&] { return r.hypergradient_oracle(); });
  r.criterion("P4", "conjugate gradient against dense solves", [&] { return r.cg_correctness(); });
  r.criterion("P5", "autodiff gradients and HVPs against finite differences", [&] { return r.derivative_suite(); });
  r.criterion("P6", "bitwise-reproducible runs under common random numbers", [&] { return r.crn_determinism(); });
  r.criterion("P7", "grid-search oracle sanity and runtime", [&] { return r.oracle_sanity(); });
  r.criterion("P8", "utility consistency with the oracle on nonlinear environments",
              [&] { return r.utility_consistency(); });
  r.criterion("P9", "feasibility and fixed points", [&] { return r.feasibility_and_fixed_points(); });
  return r.report;
}

std::string format_result(const CriterionResult& result) {
  char head[64];
  std::snprintf(head, sizeof head, "%-6s %s  ", result.id.c_str(), result.pass ? "PASS" : "FAIL");
  char tail[32];
  std::snprintf(tail, sizeof tail, "  (%.1f s)", result.seconds);
  return head + result.title + ": " + result.detail + tail;
}

}  // namespace bilevel
