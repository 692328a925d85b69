#include "bilevel/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <thread>

#include "bilevel/csv.hpp"
#include "bilevel/errors.hpp"

namespace bilevel {

namespace {

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t hash = 0xcbf29ce484222325ull;
  for (const unsigned char ch : text) {
    hash ^= ch;
    hash *= 0x100000001b3ull;
  }
  return hash;
}

// Index of point i in a grid with `resolution` points per axis, first axis slowest.
Vector contract_point(const std::vector<std::vector<double>>& axes, std::size_t i) {
  Vector t(static_cast<Eigen::Index>(axes.size()));
  for (std::size_t d = axes.size(); d-- > 0;) {
    const std::size_t n = axes[d].size();
    t[static_cast<Eigen::Index>(d)] = axes[d][i % n];
    i /= n;
  }
  return t;
}

// Wage indices and outcome means per action grid point, for signal environments.
struct SignalTables {
  std::vector<std::vector<double>> index;
  std::vector<double> mean_outcome;
  std::vector<double> cost;
};

SignalTables tabulate(const SignalModel& model, const std::vector<double>& actions, const SampleMatrix& draws) {
  SignalTables tables;
  const auto n = draws.rows();
  for (const double a : actions) {
    std::vector<double> index(static_cast<std::size_t>(n));
    double outcome_sum = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) {
      const double x = model.outcome(a, draws(k, 0));
      outcome_sum += x;
      index[static_cast<std::size_t>(k)] = model.wage_index(x);
    }
    tables.index.push_back(std::move(index));
    tables.mean_outcome.push_back(outcome_sum / static_cast<double>(n));
    tables.cost.push_back(model.effort_cost(a));
  }
  return tables;
}

void check_one_dimensional_action(const Environment& env) {
  if (env.action_dim() != 1) throw Unsupported("grid search needs a one-dimensional action (" + env.id() + ")");
}

}  // namespace

GridSpec GridSpec::for_environment(const Environment& env) {
  GridSpec grid;
  const Box contracts = env.contract_box();
  const Box actions = env.action_box();
  for (Eigen::Index j = 0; j < contracts.lower.size(); ++j) {
    const bool finite = std::isfinite(contracts.lower[j]) && std::isfinite(contracts.upper[j]);
    grid.contract_box.push_back(finite ? Interval{contracts.lower[j], contracts.upper[j]} : Interval{-2.0, 2.0});
  }
  const bool finite = std::isfinite(actions.lower[0]) && std::isfinite(actions.upper[0]);
  grid.action_box = finite ? Interval{actions.lower[0], actions.upper[0]} : Interval{-2.0, 2.0};
  return grid;
}

void GridSpec::validate() const {
  if (contract_box.empty()) throw InvalidConfig("grid.contract_box is empty");
  for (const auto& box : contract_box) {
    if (!(box.low < box.high)) throw InvalidConfig("grid contract interval needs low < high");
  }
  if (!(action_box.low < action_box.high)) throw InvalidConfig("grid action interval needs low < high");
  if (contract_resolution < 2) throw InvalidConfig("grid.contract_resolution must be at least 2");
  if (action_resolution < 2) throw InvalidConfig("grid.action_resolution must be at least 2");
  if (eval_batch_size < 1) throw InvalidConfig("grid.eval_batch_size must be positive");
  if (threads < 0) throw InvalidConfig("grid.threads must be non-negative");
}

std::string GridSpec::key() const {
  std::string key = "c=";
  for (const auto& box : contract_box) key += "[" + format_number(box.low) + "," + format_number(box.high) + "]";
  key += "x" + std::to_string(contract_resolution);
  key += "/a=[" + format_number(action_box.low) + "," + format_number(action_box.high) + "]x" +
         std::to_string(action_resolution);
  key += "/n=" + std::to_string(eval_batch_size);
  return key;
}

std::vector<double> grid_axis(Interval box, int resolution) {
  if (resolution < 2) throw InvalidConfig("grid resolution must be at least 2");
  std::vector<double> axis(static_cast<std::size_t>(resolution));
  const double width = box.high - box.low;
  for (int i = 0; i < resolution; ++i) axis[i] = box.low + width * i / (resolution - 1);
  axis.back() = box.high;
  return axis;
}

SampleMatrix oracle_draws(const Environment& env, const GridSpec& grid, std::uint64_t seed) {
  if (env.noise_dim() == 0) return Environment::analytic_draws();
  const bool antithetic = grid.eval_batch_size % 2 == 0;
  return env.draws(make_payload(seed, env.noise_dim(), grid.eval_batch_size, antithetic));
}

std::pair<double, double> best_response_on_grid(const Environment& env, const Vector& t, const GridSpec& grid,
                                                const SampleMatrix& draws) {
  check_one_dimensional_action(env);
  double best_a = 0.0, best_u2 = -std::numeric_limits<double>::infinity();
  Vector a(1);
  for (const double candidate : grid_axis(grid.action_box, grid.action_resolution)) {
    a[0] = candidate;
    const double u2 = eval_u(env, a, t, draws).agent;
    if (u2 > best_u2) {
      best_u2 = u2;
      best_a = candidate;
    }
  }
  return {best_a, best_u2};
}

std::vector<GridPoint> grid_table(const Environment& env, const GridSpec& grid, std::uint64_t seed) {
  grid.validate();
  check_one_dimensional_action(env);
  if (static_cast<int>(grid.contract_box.size()) != env.contract_dim()) {
    throw InvalidConfig("grid has " + std::to_string(grid.contract_box.size()) + " contract axes, environment " +
                        env.id() + " has " + std::to_string(env.contract_dim()));
  }

  const SampleMatrix draws = oracle_draws(env, grid, seed);
  std::vector<std::vector<double>> axes;
  std::size_t count = 1;
  for (const auto& box : grid.contract_box) {
    axes.push_back(grid_axis(box, grid.contract_resolution));
    count *= axes.back().size();
  }
  const std::vector<double> actions = grid_axis(grid.action_box, grid.action_resolution);

  const SignalModel* model = env.contract_dim() == 2 ? env.signal() : nullptr;
  SignalTables tables;
  if (model) tables = tabulate(*model, actions, draws);

  std::vector<GridPoint> table(count);
  auto evaluate = [&](std::size_t i) {
    GridPoint point;
    point.t = contract_point(axes, i);
    if (model) {
      const double lambda = point.t[0], mu = point.t[1];
      std::size_t best = 0;
      double best_u2 = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < actions.size(); ++j) {
        const double u2 = model->mean_wage_utility(tables.index[j], lambda, mu) - tables.cost[j];
        if (u2 > best_u2) {
          best_u2 = u2;
          best = j;
        }
      }
      point.a = actions[best];
      point.u2 = best_u2;
      point.u1 = tables.mean_outcome[best] - model->mean_wage(tables.index[best], lambda, mu);
    } else {
      const auto [a, u2] = best_response_on_grid(env, point.t, grid, draws);
      point.a = a;
      point.u2 = u2;
      point.u1 = eval_u(env, Vector::Constant(1, a), point.t, draws).principal;
    }
    table[i] = std::move(point);
  };

  const unsigned hardware = std::max(1u, std::thread::hardware_concurrency());
  const unsigned workers = std::min<std::size_t>(grid.threads > 0 ? grid.threads : hardware, count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) evaluate(i);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < count; i += workers) evaluate(i);
      });
    }
  }
  return table;
}

GroundTruth grid_search(const Environment& env, const GridSpec& grid, std::uint64_t seed) {
  const auto table = grid_table(env, grid, seed);
  std::size_t best = 0;
  for (std::size_t i = 1; i < table.size(); ++i) {
    if (table[i].u1 > table[best].u1) best = i;
  }
  GroundTruth truth;
  truth.a_star = Vector::Constant(1, table[best].a);
  truth.t_star = table[best].t;
  truth.u1_star = table[best].u1;
  truth.u2_star = table[best].u2;
  truth.source = TruthSource::GridSearch;
  if (env.linear()) {
    truth.transfer = post_hoc_transfer(env, truth.t_star, env.spec().reservation_utility,
                                       oracle_draws(env, grid, seed));
  }
  return truth;
}

double post_hoc_transfer(const Environment& env, const Vector& slopes, double reservation_utility,
                         const SampleMatrix& draws) {
  return env.participation_transfer(slopes, reservation_utility, draws);
}

std::string OracleCache::key(const Environment& env, const GridSpec& grid, std::uint64_t seed) {
  std::string params;
  for (const auto& [name, value] : env.spec().params) params += name + "=" + format_number(value) + ";";
  params += "U_res=" + format_number(env.spec().reservation_utility);
  params += env.analytic() ? ";analytic" : ";sampled";
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(fnv1a(params)));
  return env.id() + "|" + hash + "|" + grid.key() + "|seed=" + std::to_string(seed);
}

std::optional<GroundTruth> OracleCache::load(const std::string& key) const {
  std::ifstream in(path_);
  if (!in) return std::nullopt;
  std::optional<GroundTruth> found;
  std::string line;
  while (std::getline(in, line)) {
    const auto fields = split(line, '\t');
    if (fields.size() != 6 || fields[0] != key) continue;
    GroundTruth truth;
    truth.a_star = parse_vector(fields[1]);
    truth.t_star = parse_vector(fields[2]);
    truth.u1_star = parse_vector(fields[3])[0];
    truth.u2_star = parse_vector(fields[4])[0];
    truth.source = TruthSource::GridSearch;
    if (!fields[5].empty()) truth.transfer = parse_vector(fields[5])[0];
    found = truth;
  }
  return found;
}

void OracleCache::store(const std::string& key, const GroundTruth& truth) const {
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  std::ofstream out(path_, std::ios::app | std::ios::binary);
  if (!out) throw InvalidConfig("cannot write oracle cache " + path_.string());
  out << key << '\t' << format_vector(truth.a_star) << '\t' << format_vector(truth.t_star) << '\t'
      << format_number(truth.u1_star) << '\t' << format_number(truth.u2_star) << '\t'
      << (truth.transfer ? format_number(*truth.transfer) : "") << '\n';
}

GroundTruth cached_grid_search(const Environment& env, const GridSpec& grid, std::uint64_t seed,
                               const OracleCache* cache) {
  if (!cache) return grid_search(env, grid, seed);
  const std::string key = OracleCache::key(env, grid, seed);
  if (auto hit = cache->load(key)) return *hit;
  GroundTruth truth = grid_search(env, grid, seed);
  cache->store(key, truth);
  return truth;
}

}  // namespace bilevel
