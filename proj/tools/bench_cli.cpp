#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bilevel/bench.hpp"
#include "bilevel/errors.hpp"
#include "bilevel/validation.hpp"

namespace {

void print_truth(const bilevel::GroundTruth& truth) {
  std::cout << "a* =";
  for (const double x : truth.a_star) std::cout << ' ' << x;
  std::cout << "\nt* =";
  for (const double x : truth.t_star) std::cout << ' ' << x;
  std::cout << "\nu1* = " << truth.u1_star << "\nu2* = " << truth.u2_star << '\n';
  if (truth.transfer) std::cout << "s* = " << *truth.transfer << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bilevel principal-agent contract solver benchmarks"};
  app.require_subcommand(1);

  std::optional<std::uint64_t> seed;
  std::string out_dir = ".";
  std::optional<long> log_every;
  app.add_option("--seed", seed, "Seed for initialization and the training payload (oracle: grid payload)");
  app.add_option("--out-dir", out_dir, "Directory for CSV outputs");
  app.add_option("--log-every", log_every, "Log held-out metrics every N outer steps");

  std::string config_path;
  auto* run_cmd = app.add_subcommand("run", "Solve one configuration and write its trace and summary");
  run_cmd->add_option("config", config_path, "Config file")->required()->check(CLI::ExistingFile);

  auto* sweep_cmd = app.add_subcommand("sweep", "Run one solve per value of a swept parameter");
  sweep_cmd->add_option("sweepfile", config_path, "Config file with a [sweep] section")
      ->required()
      ->check(CLI::ExistingFile);

  auto* oracle_cmd = app.add_subcommand("oracle", "Nested grid-search ground truth");
  oracle_cmd->add_option("config", config_path, "Config file")->required()->check(CLI::ExistingFile);

  std::vector<std::string> only;
  bool corrupt_sobol = false;
  std::optional<double> lambda;
  std::optional<std::string> oracle_cache;
  auto* validate_cmd = app.add_subcommand("validate", "Run the acceptance checks");
  validate_cmd->add_option("--only", only, "Subset of checks (sobol, P1..P9)");
  validate_cmd->add_flag("--corrupt-sobol", corrupt_sobol, "Flip one Sobol direction number (fault injection)");
  validate_cmd->add_option("--lambda", lambda, "Damping for the fixed-point check");
  validate_cmd->add_option("--oracle-cache", oracle_cache, "Oracle result table to reuse");

  CLI11_PARSE(app, argc, argv);

  bilevel::BenchOptions options;
  options.out_dir = out_dir;
  options.seed = seed;
  options.log_every = log_every;

  try {
    if (*run_cmd) {
      const auto outcome = bilevel::run(bilevel::load_config(config_path), options);
      std::cout << "trace:   " << outcome.trace_path.string() << "\nsummary: " << outcome.summary_path.string()
                << '\n';
    } else if (*sweep_cmd) {
      std::cout << "sweep: " << bilevel::sweep(bilevel::load_config(config_path), options).string() << '\n';
    } else if (*oracle_cmd) {
      print_truth(bilevel::oracle(bilevel::load_config(config_path), options));
    } else if (*validate_cmd) {
      bilevel::ValidationOptions vo;
      vo.only = only;
      vo.corrupt_sobol = corrupt_sobol;
      vo.fixed_point_lambda = lambda;
      if (oracle_cache) vo.oracle_cache = *oracle_cache;
      vo.work_dir = std::filesystem::path(out_dir) / "validate";
      vo.progress = [](const std::string& message) { std::cerr << message << std::endl; };
      const auto report = bilevel::run_validation(vo, [](const bilevel::CriterionResult& result) {
        std::cout << bilevel::format_result(result) << std::endl;
      });
      return report.all_pass() ? 0 : 1;
    }
  } catch (const bilevel::InvalidConfig& e) {
    std::cerr << "invalid configuration: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
