#include "bilevel/solver.hpp"

#include <cmath>
#include <random>
#include <string>

#include "bilevel/errors.hpp"

namespace bilevel {

ParamVec ParamVec::within(const Box& box, Vector values, Block block) {
  if (values.size() != box.lower.size()) throw InvalidConfig("parameter block has wrong dimension");
  return {box.project(values), box.lower, box.upper, block};
}

bool ParamVec::feasible() const { return box().contains(values); }

void SolverConfig::validate() const {
  auto positive = [](double value, const char* name) {
    if (!(value > 0.0) || !std::isfinite(value)) {
      throw InvalidConfig(std::string("solver.") + name + " must be positive");
    }
  };
  positive(eta_in, "eta_in");
  positive(T_in, "T_in");
  positive(eps_in, "eps_in");
  positive(eta_out, "eta_out");
  if (T_out < 0) throw InvalidConfig("solver.T_out must be non-negative");
  positive(T_cg, "T_cg");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InvalidConfig("solver.lambda must be non-negative");
  positive(eps_cg, "eps_cg");
  positive(batch_n, "batch_n");
  positive(static_cast<double>(refresh_R), "refresh_R");
  positive(eval_size, "eval_size");
  positive(static_cast<double>(log_every), "log_every");
  if (antithetic && batch_n % 2 != 0) throw InvalidConfig("solver.batch_n must be even with antithetic pairing");
  if (clip_norm) positive(*clip_norm, "clip_norm");
}

SolverConfig desk_profile(const Environment& env) {
  SolverConfig cfg;
  if (env.linear()) {
    cfg.eta_out = 1e-2;
    cfg.T_out = 20'000;
  } else {
    cfg.eta_out = 1e-3;
    cfg.T_out = 50'000;
  }
  return cfg;
}

InnerResult inner_ascent(const Environment& env, const ParamVec& a0, const ParamVec& t, const SampleMatrix& draws,
                         const SolverConfig& cfg) {
  const Objective agent{&env, Party::Agent};
  InnerResult result{a0, 0, 0.0};
  Vector& a = result.a.values;
  const Box box = a0.box();

  for (int step = 0; step < cfg.T_in; ++step) {
    Vector g;
    try {
      g = grad_a(agent, a, t.values, draws);
    } catch (const NumericalError& e) {
      throw NumericalError(std::string("inner ascent: ") + e.what(), step);
    }
    result.grad_norm = g.norm();
    if (result.grad_norm <= cfg.eps_in) break;
    a = box.project(a + cfg.eta_in * g);
    ++result.steps;
  }
  return result;
}

namespace {

HypergradResult hypergrad_once(const Environment& env, const Vector& a, const Vector& t, const SampleMatrix& draws,
                               const SolverConfig& cfg, double lambda) {
  const Objective principal{&env, Party::Principal};
  const Objective agent{&env, Party::Agent};

  const Vector g_a = grad_a(principal, a, t, draws);
  const Vector g_t = grad_t(principal, a, t, draws);
  auto hessian = [&](const Vector& v) { return hvp_aa(agent, a, t, draws, v); };

  HypergradResult result;
  result.lambda_used = lambda;
  result.cg = conjugate_gradient(damped(hessian, a.size(), lambda), -g_a, cfg.T_cg, cfg.eps_cg);
  result.gradient = g_t - mixed_hvp_ta(agent, a, t, draws, result.cg.solution);
  return result;
}

}  // namespace

HypergradResult hypergrad(const Environment& env, const Vector& a_tilde, const Vector& t, const SampleMatrix& draws,
                          const SolverConfig& cfg) {
  HypergradResult result;
  try {
    result = hypergrad_once(env, a_tilde, t, draws, cfg, cfg.lambda);
  } catch (const CurvatureError&) {
    result = hypergrad_once(env, a_tilde, t, draws, cfg, 10.0 * cfg.lambda);
  }
  if (cfg.clip_norm) {
    const double norm = result.gradient.norm();
    if (norm > *cfg.clip_norm) {
      result.gradient *= *cfg.clip_norm / norm;
      result.clipped = true;
    }
  }
  return result;
}

ParamVec update_contract(const ParamVec& t, const Vector& h, const SolverConfig& cfg) {
  if (h.size() != t.values.size()) throw InvalidConfig("hypergradient has wrong dimension");
  ParamVec next = t;
  for (Eigen::Index i = 0; i < h.size(); ++i) {
    const bool held = (t.values[i] >= t.upper[i] && h[i] > 0.0) || (t.values[i] <= t.lower[i] && h[i] < 0.0);
    if (!held) next.values[i] += cfg.eta_out * h[i];
  }
  next.values = next.box().project(next.values);
  return next;
}

SampleMatrix held_out_draws(const Environment& env, const SolverConfig& cfg) {
  if (env.noise_dim() == 0) return Environment::analytic_draws();
  return env.draws(held_out_batch(cfg.eval_seed, env.noise_dim(), cfg.eval_size));
}

OuterResult outer_loop(const Environment& env, const ParamVec& t0, const ParamVec& a0, const SolverConfig& cfg,
                       const std::optional<GroundTruth>& truth, const std::function<void(const TraceRow&)>& on_row) {
  cfg.validate();
  if (!t0.feasible() || !a0.feasible()) throw InvalidConfig("initial point outside its bounds");

  OuterResult out{t0, a0, {}};
  if (cfg.T_out == 0) return out;

  const MetricEvaluator metrics(env, truth, held_out_draws(env, cfg));
  const bool sampled = env.noise_dim() > 0;
  std::optional<CrnPayload> payload;
  SampleMatrix draws = Environment::analytic_draws();
  if (sampled) {
    payload = make_payload(cfg.train_seed, env.noise_dim(), cfg.batch_n, cfg.antithetic);
    draws = env.draws(*payload);
  }

  bool feasible = true;
  for (long k = 0; k < cfg.T_out; ++k) {
    if (sampled && k > 0 && k % cfg.refresh_R == 0) {
      payload = refresh(*payload, k, cfg.refresh_R);
      draws = env.draws(*payload);
    }

    const InnerResult inner = inner_ascent(env, out.a, out.t, draws, cfg);
    const HypergradResult h = hypergrad(env, inner.a.values, out.t.values, draws, cfg);
    if (!h.gradient.allFinite()) throw NumericalError("non-finite hypergradient", k);
    out.t = update_contract(out.t, h.gradient, cfg);
    out.a = inner.a;
    feasible = feasible && out.t.feasible() && out.a.feasible();

    const long done = k + 1;
    if (done % cfg.log_every == 0 || done == cfg.T_out) {
      TraceRow row;
      row.step = done;
      row.metrics = metrics.evaluate(out.a.values, out.t.values);
      row.hgrad_norm = h.gradient.norm();
      row.inner_iters = inner.steps;
      row.cg_iters = h.cg.iterations;
      row.cg_converged = h.cg.converged;
      row.feasible = feasible;
      feasible = true;
      out.trace.push_back(row);
      if (on_row) on_row(row);
    }
  }
  return out;
}

std::pair<ParamVec, ParamVec> initial_state(const Environment& env, std::uint64_t seed) {
  std::mt19937_64 engine(seed);
  auto normal = [&engine]() {
    const double u = (static_cast<double>(engine() >> 11) + 0.5) * 0x1p-53;
    return normal_quantile(u);
  };
  Vector a(env.action_dim()), t(env.contract_dim());
  for (Eigen::Index i = 0; i < a.size(); ++i) a[i] = normal();
  for (Eigen::Index j = 0; j < t.size(); ++j) t[j] = normal();
  return {ParamVec::within(env.action_box(), a, Block::Agent), ParamVec::within(env.contract_box(), t, Block::Contract)};
}

}  // namespace bilevel
