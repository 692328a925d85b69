#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "bilevel/environment.hpp"
#include "bilevel/oracle.hpp"
#include "bilevel/solver.hpp"

namespace bilevel {

/// Where a run takes its reference optimum from.
/// Auto: closed form for linear environments, none otherwise.
enum class TruthMode { Auto, None, ClosedForm, Oracle };

struct SweepSpec {
  std::string param;
  std::vector<double> values;
};

/// Everything a `run`, `sweep` or `oracle` invocation needs.
///
/// File format: sections in brackets, `key = value` lines, `#` or `;` comments at the
/// start of a line or after whitespace.
///   [env]     id, mode (analytic|sampled), U_res, and any environment parameter
///   [solver]  profile (desk|reference) and every SolverConfig field
///   [run]     name, init_seed, truth (auto|none|closed_form|oracle), oracle_cache
///   [grid]    contract_box (lo:hi;lo:hi), contract_resolution, action_box (lo:hi),
///             action_resolution, eval_batch_size, threads, seed
///   [sweep]   param, values (comma separated)
/// Unknown sections and keys are errors naming `section.key`.
struct RunConfig {
  EnvSpec env;
  SolverConfig solver;
  std::string name = "run";
  std::uint64_t init_seed = 1;
  TruthMode truth = TruthMode::Auto;
  std::optional<std::string> oracle_cache;
  std::optional<std::vector<Interval>> grid_contract_box;
  std::optional<Interval> grid_action_box;
  int grid_contract_resolution = 100;
  int grid_action_resolution = 200;
  int grid_eval_batch_size = 8192;
  int grid_threads = 0;
  std::uint64_t oracle_seed = 7;
  std::optional<SweepSpec> sweep;

  /// Grid for `env`: configured boxes, otherwise the environment's own.
  GridSpec grid(const Environment& env) const;
};

RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

}  // namespace bilevel
