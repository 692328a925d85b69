#include "bilevel/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "bilevel/csv.hpp"
#include "bilevel/errors.hpp"

namespace bilevel {

namespace {

struct Entry {
  std::string value;
  int line = 0;
};

using Section = std::map<std::string, Entry>;

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

[[noreturn]] void fail(const std::string& where, const std::string& message) {
  throw InvalidConfig(where + ": " + message);
}

double to_double(const std::string& where, const std::string& text) {
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size() || !std::isfinite(value)) {
    fail(where, "expected a number, got '" + text + "'");
  }
  return value;
}

long to_integer(const std::string& where, const std::string& text) {
  const double value = to_double(where, text);
  if (value != std::floor(value) || std::abs(value) > 9e15) fail(where, "expected an integer, got '" + text + "'");
  return static_cast<long>(value);
}

std::uint64_t to_seed(const std::string& where, const std::string& text) {
  const long value = to_integer(where, text);
  if (value < 0) fail(where, "seed must be non-negative");
  return static_cast<std::uint64_t>(value);
}

bool to_bool(const std::string& where, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  fail(where, "expected true or false, got '" + text + "'");
}

Interval to_interval(const std::string& where, const std::string& text) {
  const auto parts = split(text, ':');
  if (parts.size() != 2) fail(where, "expected low:high, got '" + text + "'");
  return {to_double(where, trim(parts[0])), to_double(where, trim(parts[1]))};
}

// '#' or ';' opens a comment at the start of a line or after whitespace, so that
// ';' can still separate coordinates inside a value such as 0:1;-1:0.
std::size_t comment_start(const std::string& raw) {
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if ((raw[i] == '#' || raw[i] == ';') && (i == 0 || raw[i - 1] == ' ' || raw[i - 1] == '\t')) return i;
  }
  return raw.size();
}

std::map<std::string, Section> parse_sections(const std::string& text) {
  static const std::set<std::string> known{"env", "solver", "run", "grid", "sweep"};
  std::map<std::string, Section> sections;
  std::istringstream in(text);
  std::string raw, current;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(raw.substr(0, comment_start(raw)));
    if (line.empty()) continue;
    const std::string at = "line " + std::to_string(line_no);
    if (line.front() == '[') {
      if (line.back() != ']') fail(at, "malformed section header '" + line + "'");
      current = trim(line.substr(1, line.size() - 2));
      if (!known.count(current)) fail(at, "unknown section [" + current + "]");
      sections[current];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(at, "expected key = value");
    if (current.empty()) fail(at, "key outside of any section");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) fail(at, "empty key");
    auto& section = sections[current];
    if (section.count(key)) fail(current + "." + key, "duplicate key (" + at + ")");
    section[key] = {trim(line.substr(eq + 1)), line_no};
  }
  return sections;
}

void apply_env(RunConfig& cfg, Section env) {
  if (!env.count("id") || env["id"].value.empty()) fail("env.id", "missing environment id");
  const std::string id = env["id"].value;
  env.erase("id");

  std::optional<bool> analytic;
  if (env.count("mode")) {
    const std::string mode = env["mode"].value;
    if (mode == "analytic") {
      analytic = true;
    } else if (mode == "sampled") {
      analytic = false;
    } else {
      fail("env.mode", "expected analytic or sampled, got '" + mode + "'");
    }
    env.erase("mode");
  }
  double reservation = 0.0;
  if (env.count("U_res")) {
    reservation = to_double("env.U_res", env["U_res"].value);
    env.erase("U_res");
  }
  std::map<std::string, double> overrides;
  for (const auto& [key, entry] : env) overrides[key] = to_double("env." + key, entry.value);
  cfg.env = make_environment(id, overrides, analytic, reservation)->spec();
}

void apply_solver(RunConfig& cfg, const Environment& env, Section solver) {
  std::string profile = "desk";
  if (solver.count("profile")) {
    profile = solver["profile"].value;
    solver.erase("profile");
  }
  if (profile == "desk") {
    cfg.solver = desk_profile(env);
  } else if (profile == "reference") {
    cfg.solver = SolverConfig{};
  } else {
    fail("solver.profile", "expected desk or reference, got '" + profile + "'");
  }

  SolverConfig& s = cfg.solver;
  for (const auto& [key, entry] : solver) {
    const std::string where = "solver." + key;
    const std::string& v = entry.value;
    if (key == "eta_in") s.eta_in = to_double(where, v);
    else if (key == "T_in") s.T_in = static_cast<int>(to_integer(where, v));
    else if (key == "eps_in") s.eps_in = to_double(where, v);
    else if (key == "eta_out") s.eta_out = to_double(where, v);
    else if (key == "T_out") s.T_out = to_integer(where, v);
    else if (key == "T_cg") s.T_cg = static_cast<int>(to_integer(where, v));
    else if (key == "lambda") s.lambda = to_double(where, v);
    else if (key == "eps_cg") s.eps_cg = to_double(where, v);
    else if (key == "batch_n") s.batch_n = static_cast<int>(to_integer(where, v));
    else if (key == "refresh_R") s.refresh_R = to_integer(where, v);
    else if (key == "antithetic") s.antithetic = to_bool(where, v);
    else if (key == "clip_norm") s.clip_norm = v == "none" ? std::nullopt : std::optional(to_double(where, v));
    else if (key == "train_seed") s.train_seed = to_seed(where, v);
    else if (key == "eval_seed") s.eval_seed = to_seed(where, v);
    else if (key == "eval_size") s.eval_size = static_cast<int>(to_integer(where, v));
    else if (key == "log_every") s.log_every = to_integer(where, v);
    else fail(where, "unknown key");
  }
  s.validate();
}

void apply_run(RunConfig& cfg, const Section& run) {
  for (const auto& [key, entry] : run) {
    const std::string where = "run." + key;
    const std::string& v = entry.value;
    if (key == "name") {
      if (v.empty() || v.find_first_of("/\\") != std::string::npos) fail(where, "expected a plain file stem");
      cfg.name = v;
    } else if (key == "init_seed") {
      cfg.init_seed = to_seed(where, v);
    } else if (key == "truth") {
      if (v == "auto") cfg.truth = TruthMode::Auto;
      else if (v == "none") cfg.truth = TruthMode::None;
      else if (v == "closed_form") cfg.truth = TruthMode::ClosedForm;
      else if (v == "oracle") cfg.truth = TruthMode::Oracle;
      else fail(where, "expected auto, none, closed_form or oracle, got '" + v + "'");
    } else if (key == "oracle_cache") {
      cfg.oracle_cache = v;
    } else {
      fail(where, "unknown key");
    }
  }
}

void apply_grid(RunConfig& cfg, const Section& grid) {
  for (const auto& [key, entry] : grid) {
    const std::string where = "grid." + key;
    const std::string& v = entry.value;
    if (key == "contract_box") {
      std::vector<Interval> boxes;
      for (const auto& part : split(v, ';')) boxes.push_back(to_interval(where, trim(part)));
      cfg.grid_contract_box = boxes;
    } else if (key == "action_box") {
      cfg.grid_action_box = to_interval(where, v);
    } else if (key == "contract_resolution") {
      cfg.grid_contract_resolution = static_cast<int>(to_integer(where, v));
    } else if (key == "action_resolution") {
      cfg.grid_action_resolution = static_cast<int>(to_integer(where, v));
    } else if (key == "eval_batch_size") {
      cfg.grid_eval_batch_size = static_cast<int>(to_integer(where, v));
    } else if (key == "threads") {
      cfg.grid_threads = static_cast<int>(to_integer(where, v));
    } else if (key == "seed") {
      cfg.oracle_seed = to_seed(where, v);
    } else {
      fail(where, "unknown key");
    }
  }
}

void apply_sweep(RunConfig& cfg, const Section& sweep) {
  SweepSpec spec;
  for (const auto& [key, entry] : sweep) {
    const std::string where = "sweep." + key;
    if (key == "param") {
      spec.param = entry.value;
    } else if (key == "values") {
      for (const auto& part : split(entry.value, ',')) {
        const std::string item = trim(part);
        if (!item.empty()) spec.values.push_back(to_double(where, item));
      }
    } else {
      fail(where, "unknown key");
    }
  }
  if (spec.param.empty()) fail("sweep.param", "missing swept parameter");
  if (!cfg.env.params.count(spec.param)) {
    fail("sweep.param", "'" + spec.param + "' is not a parameter of " + cfg.env.id);
  }
  cfg.sweep = spec;
}

}  // namespace

GridSpec RunConfig::grid(const Environment& env) const {
  GridSpec spec = GridSpec::for_environment(env);
  if (grid_contract_box) spec.contract_box = *grid_contract_box;
  if (grid_action_box) spec.action_box = *grid_action_box;
  spec.contract_resolution = grid_contract_resolution;
  spec.action_resolution = grid_action_resolution;
  spec.eval_batch_size = grid_eval_batch_size;
  spec.threads = grid_threads;
  spec.validate();
  return spec;
}

RunConfig parse_config(const std::string& text) {
  auto sections = parse_sections(text);
  RunConfig cfg;
  apply_env(cfg, sections["env"]);
  const auto env = make_environment(cfg.env);
  apply_solver(cfg, *env, sections["solver"]);
  apply_run(cfg, sections["run"]);
  apply_grid(cfg, sections["grid"]);
  if (sections.count("sweep")) apply_sweep(cfg, sections["sweep"]);
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidConfig("cannot read config file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

}  // namespace bilevel
