#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "bilevel/config.hpp"

namespace bilevel {

/// Command-line overrides shared by the subcommands.
struct BenchOptions {
  std::filesystem::path out_dir = ".";
  /// Replaces both run.init_seed and solver.train_seed.
  std::optional<std::uint64_t> seed;
  std::optional<long> log_every;
};

const std::vector<std::string>& trace_columns();
/// Trace columns followed by a and t.
const std::vector<std::string>& summary_columns();

RunConfig with_overrides(RunConfig cfg, const BenchOptions& options);

/// Reference optimum selected by cfg.truth, going through the oracle cache when one is set.
std::optional<GroundTruth> resolve_truth(const RunConfig& cfg, const Environment& env);

struct RunOutcome {
  OuterResult result;
  Metrics final_metrics;
  std::optional<GroundTruth> truth;
  std::filesystem::path trace_path;
  std::filesystem::path summary_path;
};

/// Writes <name>_trace.csv and <name>_summary.csv into options.out_dir.
RunOutcome run(const RunConfig& cfg, const BenchOptions& options);

/// One run per swept value; writes <name>_<index>_trace.csv per value and
/// <name>_sweep.csv with one row per value. Returns the sweep CSV path.
std::filesystem::path sweep(const RunConfig& cfg, const BenchOptions& options);

/// Grid-search ground truth; writes <name>_oracle.csv. Returns the truth.
GroundTruth oracle(const RunConfig& cfg, const BenchOptions& options);

}  // namespace bilevel
