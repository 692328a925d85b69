#include "bilevel/bench.hpp"

#include "bilevel/csv.hpp"
#include "bilevel/errors.hpp"

namespace bilevel {

namespace {

std::vector<std::string> metric_fields(long step, const Metrics& m) {
  return {std::to_string(step),     format_number(m.u1),      format_number(m.u2),
          format_optional(m.err_a), format_optional(m.err_t), format_optional(m.gap_u1),
          format_optional(m.gap_u2)};
}

std::vector<std::string> trace_fields(const TraceRow& row) {
  auto fields = metric_fields(row.step, row.metrics);
  fields.push_back(format_number(row.hgrad_norm));
  fields.push_back(std::to_string(row.inner_iters));
  fields.push_back(std::to_string(row.cg_iters));
  fields.push_back(row.cg_converged ? "1" : "0");
  return fields;
}

// Summary of a state that has no logged step: solver diagnostics are left empty.
std::vector<std::string> state_fields(long step, const Metrics& m) {
  auto fields = metric_fields(step, m);
  fields.insert(fields.end(), {"", "", "", ""});
  return fields;
}

std::filesystem::path prepare(const BenchOptions& options, const std::string& file) {
  std::filesystem::create_directories(options.out_dir);
  return options.out_dir / file;
}

}  // namespace

const std::vector<std::string>& trace_columns() {
  static const std::vector<std::string> columns{"step",   "u1",          "u2",       "err_a",
                                                "err_t",  "gap_u1",      "gap_u2",   "hgrad_norm",
                                                "inner_iters", "cg_iters", "cg_converged"};
  return columns;
}

const std::vector<std::string>& summary_columns() {
  static const std::vector<std::string> columns = [] {
    auto c = trace_columns();
    c.push_back("a");
    c.push_back("t");
    return c;
  }();
  return columns;
}

RunConfig with_overrides(RunConfig cfg, const BenchOptions& options) {
  if (options.seed) {
    cfg.init_seed = *options.seed;
    cfg.solver.train_seed = *options.seed;
  }
  if (options.log_every) cfg.solver.log_every = *options.log_every;
  cfg.solver.validate();
  return cfg;
}

std::optional<GroundTruth> resolve_truth(const RunConfig& cfg, const Environment& env) {
  switch (cfg.truth) {
    case TruthMode::None:
      return std::nullopt;
    case TruthMode::Auto:
      if (!env.linear()) return std::nullopt;
      return env.closed_form();
    case TruthMode::ClosedForm:
      return env.closed_form();
    case TruthMode::Oracle: {
      std::optional<OracleCache> cache;
      if (cfg.oracle_cache) cache.emplace(*cfg.oracle_cache);
      return cached_grid_search(env, cfg.grid(env), cfg.oracle_seed, cache ? &*cache : nullptr);
    }
  }
  return std::nullopt;
}

RunOutcome run(const RunConfig& config, const BenchOptions& options) {
  const RunConfig cfg = with_overrides(config, options);
  const auto env = make_environment(cfg.env);

  RunOutcome outcome;
  outcome.truth = resolve_truth(cfg, *env);
  outcome.trace_path = prepare(options, cfg.name + "_trace.csv");
  outcome.summary_path = prepare(options, cfg.name + "_summary.csv");

  CsvWriter trace(outcome.trace_path.string());
  trace.row(trace_columns());

  auto [a0, t0] = initial_state(*env, cfg.init_seed);
  outcome.result = outer_loop(*env, t0, a0, cfg.solver, outcome.truth,
                              [&trace](const TraceRow& row) { trace.row(trace_fields(row)); });

  std::vector<std::string> summary;
  if (outcome.result.trace.empty()) {
    outcome.final_metrics = compute_metrics(a0.values, t0.values, outcome.truth, *env, held_out_draws(*env, cfg.solver));
    summary = state_fields(0, outcome.final_metrics);
  } else {
    const TraceRow& last = outcome.result.trace.back();
    outcome.final_metrics = last.metrics;
    summary = trace_fields(last);
  }
  summary.push_back(format_vector(outcome.result.a.values));
  summary.push_back(format_vector(outcome.result.t.values));

  CsvWriter summary_file(outcome.summary_path.string());
  summary_file.row(summary_columns());
  summary_file.row(summary);
  return outcome;
}

std::filesystem::path sweep(const RunConfig& config, const BenchOptions& options) {
  if (!config.sweep) throw InvalidConfig("sweep: config has no [sweep] section");
  const SweepSpec& spec = *config.sweep;
  const auto path = prepare(options, config.name + "_sweep.csv");

  CsvWriter out(path.string());
  std::vector<std::string> header{"param", "value"};
  for (const auto& column : summary_columns()) header.push_back(column);
  header.insert(header.end(), {"a_star", "t_star", "u1_star", "u2_star"});
  out.row(header);

  for (std::size_t i = 0; i < spec.values.size(); ++i) {
    RunConfig cfg = config;
    cfg.env.params[spec.param] = spec.values[i];
    cfg.env = make_environment(cfg.env)->spec();
    cfg.name = config.name + "_" + std::to_string(i);
    const RunOutcome outcome = run(cfg, options);

    std::vector<std::string> row{spec.param, format_number(spec.values[i])};
    const auto& last = outcome.result.trace;
    auto fields = last.empty() ? state_fields(0, outcome.final_metrics) : trace_fields(last.back());
    row.insert(row.end(), fields.begin(), fields.end());
    row.push_back(format_vector(outcome.result.a.values));
    row.push_back(format_vector(outcome.result.t.values));
    if (outcome.truth) {
      row.push_back(format_vector(outcome.truth->a_star));
      row.push_back(format_vector(outcome.truth->t_star));
      row.push_back(format_number(outcome.truth->u1_star));
      row.push_back(format_number(outcome.truth->u2_star));
    } else {
      row.insert(row.end(), {"", "", "", ""});
    }
    out.row(row);
  }
  return path;
}

GroundTruth oracle(const RunConfig& config, const BenchOptions& options) {
  RunConfig cfg = config;
  if (options.seed) cfg.oracle_seed = *options.seed;
  const auto env = make_environment(cfg.env);
  std::optional<OracleCache> cache;
  if (cfg.oracle_cache) cache.emplace(*cfg.oracle_cache);
  const GridSpec grid = cfg.grid(*env);
  const GroundTruth truth = cached_grid_search(*env, grid, cfg.oracle_seed, cache ? &*cache : nullptr);

  CsvWriter out(prepare(options, cfg.name + "_oracle.csv").string());
  out.row({"env", "seed", "a_star", "t_star", "u1_star", "u2_star", "transfer"});
  out.row({env->id(), std::to_string(cfg.oracle_seed), format_vector(truth.a_star), format_vector(truth.t_star),
           format_number(truth.u1_star), format_number(truth.u2_star), format_optional(truth.transfer)});
  return truth;
}

}  // namespace bilevel
