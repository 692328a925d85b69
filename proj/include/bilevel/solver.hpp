#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "bilevel/autodiff.hpp"
#include "bilevel/cg.hpp"
#include "bilevel/environment.hpp"
#include "bilevel/metrics.hpp"

namespace bilevel {

enum class Block { Agent, Contract };

/// Parameter block with its box. Updates keep lower <= values <= upper.
struct ParamVec {
  Vector values;
  Vector lower;
  Vector upper;
  Block block = Block::Agent;

  static ParamVec within(const Box& box, Vector values, Block block);
  Box box() const { return {lower, upper}; }
  bool feasible() const;
};

/// Hyperparameters of the bilevel loop. Defaults are the reference settings of the
/// method (outer budget of the linear runs); see desk_profile() for shorter runs.
struct SolverConfig {
  double eta_in = 5e-3;
  int T_in = 50;
  double eps_in = 1e-4;
  double eta_out = 1e-3;
  long T_out = 1'000'000;
  int T_cg = 20;
  double lambda = 1e-4;
  double eps_cg = 1e-10;
  int batch_n = 1024;
  long refresh_R = 100;
  bool antithetic = true;
  std::optional<double> clip_norm;
  std::uint64_t train_seed = 1;
  std::uint64_t eval_seed = 2;
  int eval_size = 8192;
  long log_every = 100;

  /// Throws InvalidConfig naming the first offending field.
  void validate() const;
};

/// Desk-scale budget: eta_out = 1e-2, T_out = 2e4 for linear environments,
/// eta_out = 1e-3, T_out = 5e4 for nonlinear ones.
SolverConfig desk_profile(const Environment& env);

struct InnerResult {
  ParamVec a;
  int steps = 0;          ///< ascent updates taken
  double grad_norm = 0.0; ///< norm of the last gradient checked
};

/// Projected gradient ascent on the agent utility with a fixed draw matrix.
InnerResult inner_ascent(const Environment& env, const ParamVec& a0, const ParamVec& t, const SampleMatrix& draws,
                         const SolverConfig& cfg);

struct HypergradResult {
  Vector gradient;
  CgReport cg;
  double lambda_used = 0.0;
  bool clipped = false;
};

/// Implicit-differentiation hypergradient grad_t u1 - grad_t(grad_a u2 . v) with
/// (-H_aa + lambda I) v = -grad_a u1 solved by CG. A curvature failure is retried
/// once with 10 lambda before it propagates.
HypergradResult hypergrad(const Environment& env, const Vector& a_tilde, const Vector& t, const SampleMatrix& draws,
                          const SolverConfig& cfg);

/// t + eta_out h with outward-pushing coordinates at a bound held, then projected.
ParamVec update_contract(const ParamVec& t, const Vector& h, const SolverConfig& cfg);

struct TraceRow {
  long step = 0;
  Metrics metrics;
  double hgrad_norm = 0.0;
  int inner_iters = 0;
  int cg_iters = 0;
  bool cg_converged = true;
  /// Every update since the previous row kept a and t inside their boxes.
  bool feasible = true;
};

using RunTrace = std::vector<TraceRow>;

struct OuterResult {
  ParamVec t;
  ParamVec a;
  RunTrace trace;
};

/// Full bilevel loop. Metrics are evaluated on the held-out batch after every
/// log_every-th update and after the last one. `on_row` sees each row as it is logged.
OuterResult outer_loop(const Environment& env, const ParamVec& t0, const ParamVec& a0, const SolverConfig& cfg,
                       const std::optional<GroundTruth>& truth = std::nullopt,
                       const std::function<void(const TraceRow&)>& on_row = {});

/// a0, t0 drawn from N(0, 1) (portable inverse-CDF stream seeded by `seed`) and
/// projected into the environment's boxes.
std::pair<ParamVec, ParamVec> initial_state(const Environment& env, std::uint64_t seed);

/// Draw matrix of the fixed evaluation batch (single empty row for analytic environments).
SampleMatrix held_out_draws(const Environment& env, const SolverConfig& cfg);

}  // namespace bilevel
