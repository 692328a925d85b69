#include "bilevel/environment.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <set>
#include <string>
#include <utility>

#include "bilevel/errors.hpp"

namespace bilevel {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Box unbounded(int n) { return {Vector::Constant(n, -kInf), Vector::Constant(n, kInf)}; }

void require_positive(const EnvSpec& spec, const std::string& name) {
  const double value = spec.params.at(name);
  if (!(value > 0.0) || !std::isfinite(value)) {
    throw InvalidConfig("env." + name + " must be positive for " + spec.id + ", got " + std::to_string(value));
  }
}

// Random part of a linear wage, W = sum_k coef_k sigma_k z_k, and the CARA risk
// premium r W^2 / 2. With no draws, W = 0 and the premium is its expectation
// r/2 sum_k coef_k^2 sigma_k^2.
template <class T>
struct WageNoise {
  T shock;
  T premium;
};

template <class T>
WageNoise<T> wage_noise(std::span<const T> coefs, std::span<const double> sigmas, std::span<const double> z,
                        double r) {
  if (z.empty()) {
    T variance{0.0};
    for (std::size_t k = 0; k < coefs.size(); ++k) variance += coefs[k] * coefs[k] * (sigmas[k] * sigmas[k]);
    return {T{0.0}, 0.5 * r * variance};
  }
  T shock{0.0};
  for (std::size_t k = 0; k < coefs.size(); ++k) shock += coefs[k] * (sigmas[k] * z[k]);
  return {shock, 0.5 * r * shock * shock};
}

template <class Derived>
class EnvironmentImpl : public Environment {
 public:
  using Environment::Environment;

  Utilities<double> utilities(std::span<const double> a, std::span<const double> t,
                              std::span<const double> z) const override {
    return static_cast<const Derived&>(*this).template evaluate<double>(a, t, z);
  }
  Utilities<HyperDual> utilities(std::span<const HyperDual> a, std::span<const HyperDual> t,
                                 std::span<const double> z) const override {
    return static_cast<const Derived&>(*this).template evaluate<HyperDual>(a, t, z);
  }
};

// Linear CARA-Normal settings. Each draw row holds standard normals, one per
// independent noise source; an empty row evaluates the closed-form expectation.
template <class Derived>
class LinearEnvironment : public EnvironmentImpl<Derived> {
 public:
  using EnvironmentImpl<Derived>::EnvironmentImpl;

  bool linear() const override { return true; }

  std::vector<NoiseKind> noise() const override {
    if (this->analytic()) return {};
    return std::vector<NoiseKind>(static_cast<const Derived&>(*this).noise_sources(), NoiseKind{});
  }

  Box action_box() const override { return unbounded(this->action_dim()); }
  Box contract_box() const override { return unbounded(this->contract_dim()); }

  GroundTruth closed_form() const override {
    GroundTruth truth;
    truth.t_star = static_cast<const Derived&>(*this).optimal_slopes();
    truth.a_star = this->best_response(truth.t_star);
    const auto u = eval_u(*this, truth.a_star, truth.t_star, Environment::analytic_draws());
    truth.u1_star = u.principal;
    truth.u2_star = u.agent;
    truth.source = TruthSource::ClosedForm;
    truth.transfer = this->participation_transfer(truth.t_star, this->spec().reservation_utility,
                                                  Environment::analytic_draws());
    return truth;
  }

  double participation_transfer(const Vector& slopes, double reservation_utility,
                                const SampleMatrix& draws) const override {
    const Vector a = this->best_response(slopes);
    const double agent = eval_u(*this, a, slopes, draws).agent;
    return this->transfer_sign() * (reservation_utility - agent);
  }
};

class HolmstromMilgrom final : public LinearEnvironment<HolmstromMilgrom> {
 public:
  explicit HolmstromMilgrom(EnvSpec spec)
      : LinearEnvironment(std::move(spec)), r_(param("r")), c_(param("c")), sigma_(param("sigma")) {}

  int action_dim() const override { return 1; }
  int contract_dim() const override { return 1; }
  int noise_sources() const { return 1; }
  std::vector<std::string> contract_names() const override { return {"b"}; }

  template <class T>
  Utilities<T> evaluate(std::span<const T> a, std::span<const T> t, std::span<const double> z) const {
    const T& b = t[0];
    const auto noise = wage_noise<T>(std::span<const T>(&b, 1), std::span<const double>(&sigma_, 1), z, r_);
    const T cost = 0.5 * c_ * a[0] * a[0];
    const T output = a[0] + (z.empty() ? 0.0 : sigma_ * z[0]);
    return {output - noise.premium - cost, b * a[0] + noise.shock - noise.premium - cost};
  }

  Vector optimal_slopes() const { return Vector::Constant(1, 1.0 / (1.0 + r_ * c_ * sigma_ * sigma_)); }
  Vector best_response(const Vector& t) const override { return Vector::Constant(1, t[0] / c_); }

 private:
  double r_, c_, sigma_;
};

class Insurance final : public LinearEnvironment<Insurance> {
 public:
  explicit Insurance(EnvSpec spec)
      : LinearEnvironment(std::move(spec)), r_(param("r")), c_(param("c")), sigma_(param("sigma")), ell_(param("ell")) {}

  int action_dim() const override { return 1; }
  int contract_dim() const override { return 1; }
  int noise_sources() const { return 1; }
  std::vector<std::string> contract_names() const override { return {"b"}; }

  template <class T>
  Utilities<T> evaluate(std::span<const T> a, std::span<const T> t, std::span<const double> z) const {
    const T retained = 1.0 - t[0];
    const auto noise = wage_noise<T>(std::span<const T>(&retained, 1), std::span<const double>(&sigma_, 1), z, r_);
    const T cost = 0.5 * c_ * a[0] * a[0];
    const T loss = (ell_ - a[0]) + (z.empty() ? 0.0 : sigma_ * z[0]);
    return {-loss - noise.premium - cost, -retained * loss - noise.premium - cost};
  }

  Vector optimal_slopes() const {
    const double k = r_ * c_ * sigma_ * sigma_;
    return Vector::Constant(1, k / (1.0 + k));
  }
  Vector best_response(const Vector& t) const override { return Vector::Constant(1, (1.0 - t[0]) / c_); }

 protected:
  double transfer_sign() const override { return -1.0; }

 private:
  double r_, c_, sigma_, ell_;
};

class ImperfectMeasurement final : public LinearEnvironment<ImperfectMeasurement> {
 public:
  explicit ImperfectMeasurement(EnvSpec spec)
      : LinearEnvironment(std::move(spec)),
        r_(param("r")),
        c_(param("c")),
        sigma_(param("sigma")),
        alpha_(param("alpha")),
        v_(param("v")) {}

  int action_dim() const override { return 1; }
  int contract_dim() const override { return 1; }
  int noise_sources() const { return 1; }
  std::vector<std::string> contract_names() const override { return {"b"}; }

  template <class T>
  Utilities<T> evaluate(std::span<const T> a, std::span<const T> t, std::span<const double> z) const {
    const T& b = t[0];
    const auto noise = wage_noise<T>(std::span<const T>(&b, 1), std::span<const double>(&sigma_, 1), z, r_);
    const T cost = 0.5 * c_ * a[0] * a[0];
    return {v_ * a[0] - noise.premium - cost, b * (alpha_ * a[0]) + noise.shock - noise.premium - cost};
  }

  Vector optimal_slopes() const {
    return Vector::Constant(1, v_ * alpha_ / (v_ * alpha_ * alpha_ + r_ * c_ * sigma_ * sigma_));
  }
  Vector best_response(const Vector& t) const override { return Vector::Constant(1, alpha_ * t[0] / c_); }

 private:
  double r_, c_, sigma_, alpha_, v_;
};

class RelativePerformance final : public LinearEnvironment<RelativePerformance> {
 public:
  explicit RelativePerformance(EnvSpec spec)
      : LinearEnvironment(std::move(spec)),
        r_(param("r")),
        c_(param("c")),
        v_(param("v")),
        sigma_(param("sigma")),
        tau_(param("tau")),
        a_peer_(param("a_peer")) {}

  int action_dim() const override { return 1; }
  int contract_dim() const override { return 2; }
  int noise_sources() const { return 3; }
  std::vector<std::string> contract_names() const override { return {"b", "d"}; }

  // Noise sources: own idiosyncratic, peer idiosyncratic, common shock.
  template <class T>
  Utilities<T> evaluate(std::span<const T> a, std::span<const T> t, std::span<const double> z) const {
    const T& b = t[0];
    const T& d = t[1];
    const std::array<T, 3> coefs{b, d, b + d};
    const std::array<double, 3> sigmas{sigma_, sigma_, tau_};
    const auto noise = wage_noise<T>(coefs, sigmas, z, r_);
    const T cost = 0.5 * c_ * a[0] * a[0];
    const T pay = b * a[0] + d * a_peer_ + noise.shock;
    return {v_ * a[0] - noise.premium - cost, pay - noise.premium - cost};
  }

  double effective_variance() const {
    const double s2 = sigma_ * sigma_, t2 = tau_ * tau_;
    return s2 * (s2 + 2.0 * t2) / (s2 + t2);
  }
  Vector optimal_slopes() const {
    const double s2 = sigma_ * sigma_, t2 = tau_ * tau_;
    const double b = v_ / (v_ + r_ * c_ * effective_variance());
    return Vector{{b, -b * t2 / (s2 + t2)}};
  }
  Vector best_response(const Vector& t) const override { return Vector::Constant(1, t[0] / c_); }

 private:
  double r_, c_, v_, sigma_, tau_, a_peer_;
};

class TwoSignals final : public LinearEnvironment<TwoSignals> {
 public:
  explicit TwoSignals(EnvSpec spec)
      : LinearEnvironment(std::move(spec)),
        r_(param("r")),
        c_(param("c")),
        v_(param("v")),
        sigmas_{param("sigma1"), param("sigma2")} {}

  int action_dim() const override { return 1; }
  int contract_dim() const override { return 2; }
  int noise_sources() const { return 2; }
  std::vector<std::string> contract_names() const override { return {"b1", "b2"}; }

  template <class T>
  Utilities<T> evaluate(std::span<const T> a, std::span<const T> t, std::span<const double> z) const {
    const auto noise = wage_noise<T>(t.first(2), sigmas_, z, r_);
    const T cost = 0.5 * c_ * a[0] * a[0];
    return {v_ * a[0] - noise.premium - cost, (t[0] + t[1]) * a[0] + noise.shock - noise.premium - cost};
  }

  double effective_variance() const {
    const double p1 = 1.0 / (sigmas_[0] * sigmas_[0]), p2 = 1.0 / (sigmas_[1] * sigmas_[1]);
    return 1.0 / (p1 + p2);
  }
  Vector optimal_slopes() const {
    const double p1 = 1.0 / (sigmas_[0] * sigmas_[0]), p2 = 1.0 / (sigmas_[1] * sigmas_[1]);
    const double beta = v_ / (v_ + r_ * c_ * effective_variance());
    return Vector{{beta * p1 / (p1 + p2), beta * p2 / (p1 + p2)}};
  }
  Vector best_response(const Vector& t) const override { return Vector::Constant(1, (t[0] + t[1]) / c_); }

 private:
  double r_, c_, v_;
  std::array<double, 2> sigmas_;
};

class Multitask final : public LinearEnvironment<Multitask> {
 public:
  explicit Multitask(EnvSpec spec) : LinearEnvironment(std::move(spec)), r_(param("r")) {
    const int k = tasks();
    c_.resize(k);
    sigma_.resize(k);
    v_.resize(k);
    for (int i = 0; i < k; ++i) {
      c_[i] = task_param("c", i);
      sigma_[i] = task_param("sigma", i);
      v_[i] = task_param("v", i);
      if (!(c_[i] > 0.0) || !(sigma_[i] > 0.0)) {
        throw InvalidConfig("multitask costs and noise scales must be positive (task " + std::to_string(i + 1) + ")");
      }
    }
  }

  int tasks() const { return static_cast<int>(param("K")); }
  int action_dim() const override { return tasks(); }
  int contract_dim() const override { return tasks(); }
  int noise_sources() const { return tasks(); }
  std::vector<std::string> contract_names() const override {
    std::vector<std::string> names;
    for (int i = 1; i <= tasks(); ++i) names.push_back("b" + std::to_string(i));
    return names;
  }

  template <class T>
  Utilities<T> evaluate(std::span<const T> a, std::span<const T> t, std::span<const double> z) const {
    const auto noise = wage_noise<T>(t, sigma_, z, r_);
    T cost{0.0}, output{0.0}, pay{0.0};
    for (std::size_t i = 0; i < c_.size(); ++i) {
      cost += 0.5 * c_[i] * a[i] * a[i];
      output += v_[i] * a[i];
      pay += t[i] * a[i];
    }
    return {output - noise.premium - cost, pay + noise.shock - noise.premium - cost};
  }

  Vector optimal_slopes() const {
    Vector b(tasks());
    for (int i = 0; i < tasks(); ++i) b[i] = v_[i] / (v_[i] + r_ * c_[i] * sigma_[i] * sigma_[i]);
    return b;
  }
  Vector best_response(const Vector& t) const override {
    Vector a(tasks());
    for (int i = 0; i < tasks(); ++i) a[i] = t[i] / c_[i];
    return a;
  }

 private:
  double task_param(const std::string& name, int i) const {
    const auto& params = spec().params;
    const auto it = params.find(name + "_" + std::to_string(i + 1));
    return it != params.end() ? it->second : param(name);
  }

  double r_;
  std::vector<double> c_, sigma_, v_;
};

enum class WageUtility { Log, Sqrt, Crra, Threshold, CaraExp };
enum class OutcomeLaw { Additive, PoissonMeanExp };

// Nonlinear signal settings sharing the floored logistic wage.
class SignalEnvironment final : public EnvironmentImpl<SignalEnvironment>, public SignalModel {
 public:
  SignalEnvironment(EnvSpec spec, WageUtility utility, OutcomeLaw law, NoiseFamily family)
      : EnvironmentImpl(std::move(spec)), utility_(utility), law_(law), family_(family) {
    a0_ = param("a0");
    s_ = param("s");
    c_ = param("c");
    w_min_ = param("w_min");
    if (utility_ == WageUtility::Crra) gamma_ = param("gamma");
    if (utility_ == WageUtility::Threshold || utility_ == WageUtility::CaraExp) rho_ = param("rho");
    if (utility_ == WageUtility::Threshold) theta_ = param("theta");
  }

  int action_dim() const override { return 1; }
  int contract_dim() const override { return 2; }
  bool linear() const override { return false; }
  std::vector<NoiseKind> noise() const override { return {NoiseKind{family_, 0.0, 1.0}}; }
  std::vector<std::string> contract_names() const override { return {"lambda", "mu"}; }
  const SignalModel* signal() const override { return this; }

  Box action_box() const override {
    const double half = law_ == OutcomeLaw::PoissonMeanExp ? 6.0 : 6.0 * s_;
    return {Vector::Constant(1, a0_ - half), Vector::Constant(1, a0_ + half)};
  }
  Box contract_box() const override {
    if (utility_ == WageUtility::Crra) return {Vector{{w_min_, 0.20}}, Vector{{3.0, 3.0}}};
    return {Vector{{w_min_, 0.0}}, Vector{{w_min_ + 8.0, 8.0}}};
  }

  template <class T>
  Utilities<T> evaluate(std::span<const T> a, std::span<const T> t, std::span<const double> z) const {
    if (z.empty()) throw Unsupported(id() + " has no analytic expectation");
    const T x = outcome_of(a[0], z[0]);
    const T w = floor_at(t[0] + t[1] * index_of(x), w_min_);
    return {x - w, utility_of(w) - 0.5 * c_ * a[0] * a[0]};
  }

  double outcome(double a, double z) const override { return outcome_of(a, z); }
  double wage_index(double x) const override { return index_of(x); }
  double wage_utility(double w) const override { return utility_of(w); }
  double wage_floor() const override { return w_min_; }
  double effort_cost(double a) const override { return 0.5 * c_ * a * a; }

  double mean_wage_utility(std::span<const double> index, double lambda, double mu) const override {
    switch (utility_) {
      case WageUtility::Log:
        return mean_of(index, lambda, mu, [](double w) { return std::log(w); });
      case WageUtility::Sqrt:
        return mean_of(index, lambda, mu, [](double w) { return std::sqrt(w); });
      case WageUtility::Crra:
        if (gamma_ == 1.0) return mean_of(index, lambda, mu, [](double w) { return std::log(w); });
        return mean_of(index, lambda, mu,
                       [p = 1.0 - gamma_](double w) { return std::pow(w, p) / p; });
      case WageUtility::Threshold:
        return mean_of(index, lambda, mu, [this](double w) { return sigmoid(rho_ * (w - theta_)); });
      case WageUtility::CaraExp:
        return mean_of(index, lambda, mu, [this](double w) { return -std::exp(-rho_ * w); });
    }
    return 0.0;
  }

 private:
  template <class G>
  double mean_of(std::span<const double> index, double lambda, double mu, G g) const {
    double sum = 0.0;
    for (const double idx : index) sum += g(floor_at(lambda + mu * idx, w_min_));
    return sum / static_cast<double>(index.size());
  }

  template <class T>
  T outcome_of(const T& a, double z) const {
    using std::exp;
    if (law_ == OutcomeLaw::Additive) return a + s_ * z;
    return exp(a) + exp(0.5 * a) * z;
  }

  template <class T>
  T index_of(const T& x) const {
    return sigmoid((x - a0_) / s_);
  }

  template <class T>
  T utility_of(const T& w) const {
    using std::exp;
    using std::log;
    using std::pow;
    using std::sqrt;
    switch (utility_) {
      case WageUtility::Log:
        return log(w);
      case WageUtility::Sqrt:
        return sqrt(w);
      case WageUtility::Crra:
        if (gamma_ == 1.0) return log(w);
        return pow(w, 1.0 - gamma_) / (1.0 - gamma_);
      case WageUtility::Threshold:
        return sigmoid(rho_ * (w - theta_));
      case WageUtility::CaraExp:
        return -exp(-rho_ * w);
    }
    return w;
  }

  WageUtility utility_;
  OutcomeLaw law_;
  NoiseFamily family_;
  double a0_ = 0.0, s_ = 1.0, c_ = 1.0, w_min_ = 0.0, gamma_ = 1.0, rho_ = 1.0, theta_ = 0.0;
};

struct Registration {
  std::map<std::string, double> defaults;
  std::vector<std::string> positive;
};

const std::map<std::string, Registration>& registry() {
  static const std::map<std::string, Registration> table{
      {"holmstrom_milgrom", {{{"r", 1.0}, {"c", 1.0}, {"sigma", 0.1}}, {"c", "sigma"}}},
      {"insurance", {{{"r", 1.0}, {"c", 1.0}, {"sigma", 1.0}, {"ell", 1.0}}, {"c", "sigma"}}},
      {"imperfect_measurement",
       {{{"r", 1.0}, {"c", 1.0}, {"sigma", 1.0}, {"alpha", 1.0}, {"v", 1.0}}, {"c", "sigma"}}},
      {"relative_performance",
       {{{"r", 1.0}, {"c", 1.0}, {"v", 1.0}, {"sigma", 0.2}, {"tau", 0.2}, {"a_peer", 0.1}}, {"c", "sigma", "tau"}}},
      {"two_signals", {{{"r", 1.0}, {"c", 1.0}, {"v", 1.0}, {"sigma1", 1.0}, {"sigma2", 1.0}}, {"c", "sigma1", "sigma2"}}},
      {"multitask", {{{"K", 3.0}, {"r", 1.0}, {"c", 1.0}, {"sigma", 0.2}, {"v", 1.0}}, {"c", "sigma", "K"}}},
      {"logistic", {{{"a0", 0.0}, {"s", 1.0}, {"c", 0.25}, {"w_min", 0.25}}, {"s", "c", "w_min"}}},
      {"sqrt_logistic", {{{"a0", 0.0}, {"s", 1.0}, {"c", 0.3}, {"w_min", 0.2}}, {"s", "c", "w_min"}}},
      {"crra_logistic",
       {{{"a0", 0.0}, {"s", 1.0}, {"c", 0.3}, {"w_min", 0.2}, {"gamma", 1.2}}, {"s", "c", "w_min", "gamma"}}},
      {"laplace_threshold",
       {{{"a0", 0.0}, {"s", 1.0}, {"c", 0.3}, {"w_min", 0.2}, {"rho", 1.25}, {"theta", 0.0}},
        {"s", "c", "w_min", "rho"}}},
      {"poisson", {{{"a0", 0.0}, {"s", 1.0}, {"c", 0.3}, {"w_min", 0.2}, {"rho", 1.0}}, {"s", "c", "w_min", "rho"}}},
  };
  return table;
}

bool is_task_override(const std::string& key, int tasks) {
  for (const std::string prefix : {"c_", "sigma_", "v_"}) {
    if (key.rfind(prefix, 0) != 0) continue;
    const std::string index = key.substr(prefix.size());
    if (index.empty() || index.find_first_not_of("0123456789") != std::string::npos) return false;
    const int i = std::stoi(index);
    return i >= 1 && i <= tasks;
  }
  return false;
}

}  // namespace

bool Box::contains(const Vector& x) const {
  return x.size() == lower.size() && (x.array() >= lower.array()).all() && (x.array() <= upper.array()).all();
}

Vector Box::project(const Vector& x) const { return x.cwiseMax(lower).cwiseMin(upper); }

double SignalModel::wage(double x, const Vector& t) const {
  return floor_at(t[0] + t[1] * wage_index(x), wage_floor());
}

double SignalModel::mean_wage(std::span<const double> index, double lambda, double mu) const {
  double sum = 0.0;
  for (const double idx : index) sum += floor_at(lambda + mu * idx, wage_floor());
  return sum / static_cast<double>(index.size());
}

double Environment::param(const std::string& name) const {
  const auto it = spec_.params.find(name);
  if (it == spec_.params.end()) throw InvalidConfig("environment " + spec_.id + " has no parameter " + name);
  return it->second;
}

Box Environment::action_box() const { return unbounded(action_dim()); }
Box Environment::contract_box() const { return unbounded(contract_dim()); }

GroundTruth Environment::closed_form() const {
  throw Unsupported("no closed-form optimum for environment " + id());
}

Vector Environment::best_response(const Vector&) const {
  throw Unsupported("no closed-form best response for environment " + id());
}

double Environment::participation_transfer(const Vector&, double, const SampleMatrix&) const {
  throw Unsupported("environment " + id() + " has no fixed transfer");
}

SampleMatrix Environment::draws(const CrnPayload& payload) const {
  const auto kinds = noise();
  if (kinds.empty()) return analytic_draws();
  return transform_payload(payload, kinds);
}

Utilities<double> eval_u(const Environment& env, const Vector& a, const Vector& t, const SampleMatrix& draws) {
  if (a.size() != env.action_dim() || t.size() != env.contract_dim()) {
    throw InvalidConfig("dimension mismatch evaluating " + env.id());
  }
  if (draws.rows() < 1) throw InvalidConfig("empty draw matrix");
  const std::span<const double> as(a.data(), a.size()), ts(t.data(), t.size());
  double principal = 0.0, agent = 0.0;
  for (Eigen::Index i = 0; i < draws.rows(); ++i) {
    const auto u = env.utilities(as, ts, std::span<const double>(draws.data() + i * draws.cols(), draws.cols()));
    if (!std::isfinite(u.principal) || !std::isfinite(u.agent)) {
      throw NumericalError("non-finite utility in " + env.id(), i);
    }
    principal += u.principal;
    agent += u.agent;
  }
  const double n = static_cast<double>(draws.rows());
  return {principal / n, agent / n};
}

std::vector<std::string> environment_ids() {
  std::vector<std::string> ids;
  for (const auto& [id, reg] : registry()) ids.push_back(id);
  return ids;
}

std::map<std::string, double> default_params(const std::string& id) {
  const auto it = registry().find(id);
  if (it == registry().end()) throw InvalidConfig("unknown environment id '" + id + "'");
  return it->second.defaults;
}

std::unique_ptr<Environment> make_environment(const std::string& id, const std::map<std::string, double>& overrides,
                                              std::optional<bool> analytic, double reservation_utility) {
  const auto it = registry().find(id);
  if (it == registry().end()) throw InvalidConfig("unknown environment id '" + id + "'");

  EnvSpec spec{id, it->second.defaults, true, reservation_utility};
  const int tasks = id == "multitask" ? static_cast<int>(overrides.count("K") ? overrides.at("K") : spec.params.at("K"))
                                      : 0;
  for (const auto& [key, value] : overrides) {
    if (!spec.params.count(key) && !(id == "multitask" && is_task_override(key, tasks))) {
      throw InvalidConfig("unknown parameter env." + key + " for environment " + id);
    }
    if (!std::isfinite(value)) throw InvalidConfig("env." + key + " must be finite");
    spec.params[key] = value;
  }
  for (const auto& name : it->second.positive) require_positive(spec, name);
  if (id == "multitask" && spec.params.at("K") != std::floor(spec.params.at("K"))) {
    throw InvalidConfig("env.K must be a positive integer");
  }
  if (id == "multitask" && spec.params.at("K") > kMaxSobolDim) {
    throw InvalidConfig("env.K larger than the supported noise dimension");
  }

  const bool is_linear = it->second.defaults.count("r") > 0;
  if (!is_linear && analytic.value_or(false)) {
    throw InvalidConfig("environment " + id + " has no analytic mode");
  }
  spec.analytic = is_linear && analytic.value_or(true);

  if (id == "holmstrom_milgrom") return std::make_unique<HolmstromMilgrom>(std::move(spec));
  if (id == "insurance") return std::make_unique<Insurance>(std::move(spec));
  if (id == "imperfect_measurement") return std::make_unique<ImperfectMeasurement>(std::move(spec));
  if (id == "relative_performance") return std::make_unique<RelativePerformance>(std::move(spec));
  if (id == "two_signals") return std::make_unique<TwoSignals>(std::move(spec));
  if (id == "multitask") return std::make_unique<Multitask>(std::move(spec));
  if (id == "logistic") {
    return std::make_unique<SignalEnvironment>(std::move(spec), WageUtility::Log, OutcomeLaw::Additive,
                                               NoiseFamily::Logistic);
  }
  if (id == "sqrt_logistic") {
    return std::make_unique<SignalEnvironment>(std::move(spec), WageUtility::Sqrt, OutcomeLaw::Additive,
                                               NoiseFamily::Logistic);
  }
  if (id == "crra_logistic") {
    return std::make_unique<SignalEnvironment>(std::move(spec), WageUtility::Crra, OutcomeLaw::Additive,
                                               NoiseFamily::Logistic);
  }
  if (id == "laplace_threshold") {
    return std::make_unique<SignalEnvironment>(std::move(spec), WageUtility::Threshold, OutcomeLaw::Additive,
                                               NoiseFamily::Laplace);
  }
  return std::make_unique<SignalEnvironment>(std::move(spec), WageUtility::CaraExp, OutcomeLaw::PoissonMeanExp,
                                             NoiseFamily::Normal);
}

std::unique_ptr<Environment> make_environment(const EnvSpec& spec) {
  const auto defaults = default_params(spec.id);
  std::map<std::string, double> overrides;
  for (const auto& [key, value] : spec.params) {
    const auto d = defaults.find(key);
    if (d == defaults.end() || d->second != value) overrides[key] = value;
  }
  const std::optional<bool> mode = spec.analytic ? std::nullopt : std::optional<bool>{false};
  return make_environment(spec.id, overrides, mode, spec.reservation_utility);
}

}  // namespace bilevel
