#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "bilevel/environment.hpp"

namespace bilevel {

struct Interval {
  double low = 0.0;
  double high = 1.0;
};

/// Nested grid: a rectangular contract grid and a 1-D action grid, evaluated on one
/// shared antithetic QMC batch.
struct GridSpec {
  std::vector<Interval> contract_box;
  int contract_resolution = 100;
  Interval action_box;
  int action_resolution = 200;
  int eval_batch_size = 8192;
  /// Worker threads for the contract sweep; 0 picks the hardware concurrency.
  int threads = 0;

  /// The environment's own contract and action boxes with default resolutions.
  static GridSpec for_environment(const Environment& env);
  void validate() const;
  std::string key() const;
};

/// Evenly spaced points from low to high inclusive.
std::vector<double> grid_axis(Interval box, int resolution);

/// One evaluated contract: the agent's grid best response and both utilities there.
struct GridPoint {
  Vector t;
  double a = 0.0;
  double u1 = 0.0;
  double u2 = 0.0;
};

/// Argmax of the agent utility over the action grid for fixed t; ties go to the smaller a.
std::pair<double, double> best_response_on_grid(const Environment& env, const Vector& t, const GridSpec& grid,
                                                const SampleMatrix& draws);

/// Evaluates every contract grid point in lexicographic order (first axis slowest).
std::vector<GridPoint> grid_table(const Environment& env, const GridSpec& grid, std::uint64_t seed);

/// Best principal utility over the grid; ties go to the lexicographically smallest (t, a).
GroundTruth grid_search(const Environment& env, const GridSpec& grid, std::uint64_t seed);

/// The oracle's shared draw matrix for (env, grid, seed).
SampleMatrix oracle_draws(const Environment& env, const GridSpec& grid, std::uint64_t seed);

/// Fixed transfer meeting participation at equality, averaged over `draws` when sampled.
double post_hoc_transfer(const Environment& env, const Vector& slopes, double reservation_utility,
                         const SampleMatrix& draws);

/// Plain-text cache of oracle results keyed by (env id, parameter hash, grid, seed).
class OracleCache {
 public:
  explicit OracleCache(std::filesystem::path path) : path_(std::move(path)) {}

  static std::string key(const Environment& env, const GridSpec& grid, std::uint64_t seed);

  std::optional<GroundTruth> load(const std::string& key) const;
  void store(const std::string& key, const GroundTruth& truth) const;

 private:
  std::filesystem::path path_;
};

/// grid_search through the cache when one is given.
GroundTruth cached_grid_search(const Environment& env, const GridSpec& grid, std::uint64_t seed,
                               const OracleCache* cache);

}  // namespace bilevel
