#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace bilevel {

/// Pass thresholds of the acceptance suite.
namespace tolerance {
inline constexpr double kRecoveryErrT = 1e-2;
inline constexpr double kRecoveryErrA = 1e-2;
inline constexpr double kRecoveryGapU1 = 1e-3;
inline constexpr double kSampledErrT = 2e-2;
inline constexpr double kSampledGapU1 = 5e-3;
inline constexpr double kToyExact = 1e-10;
inline constexpr double kToyDamped = 2e-4;
inline constexpr double kTotalDerivative = 1e-3;
inline constexpr double kCgRelative = 1e-6;
inline constexpr double kGradient = 1e-5;
inline constexpr double kHvp = 1e-4;
inline constexpr double kSymmetry = 1e-10;
inline constexpr double kOracleHalfCell = 2.5e-3;
inline constexpr double kOracleSeconds = 600.0;
inline constexpr double kUtilityConsistency = 0.02;
inline constexpr double kFixedPoint = 1e-3;
}  // namespace tolerance

struct CriterionResult {
  std::string id;
  std::string title;
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
};

struct ValidationOptions {
  /// Criterion ids to run ("P1".."P9", "sobol"); empty runs everything.
  std::vector<std::string> only;
  /// Flips one Sobol direction number before the reference-point check.
  bool corrupt_sobol = false;
  /// Damping used by the fixed-point check instead of 1e-6.
  std::optional<double> fixed_point_lambda;
  /// Oracle results are read from and written to this table when set.
  std::optional<std::filesystem::path> oracle_cache;
  /// Scratch directory for run outputs.
  std::filesystem::path work_dir = std::filesystem::temp_directory_path() / "bilevel-validate";
  /// Free-form progress messages.
  std::function<void(const std::string&)> progress;
};

struct ValidationReport {
  std::vector<CriterionResult> results;
  bool all_pass() const;
};

/// Runs the selected checks in order, reporting each result as soon as it is known.
ValidationReport run_validation(const ValidationOptions& options,
                                const std::function<void(const CriterionResult&)>& on_result = {});

/// "P1   PASS  title  detail  (12.3 s)"
std::string format_result(const CriterionResult& result);

}  // namespace bilevel
