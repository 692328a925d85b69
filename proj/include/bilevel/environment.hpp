#pragma once

#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "bilevel/autodiff.hpp"
#include "bilevel/hyperdual.hpp"
#include "bilevel/qmc.hpp"

namespace bilevel {

enum class Party { Principal, Agent };

template <class T>
struct Utilities {
  T principal;
  T agent;
};

/// Elementwise box; infinite entries mean unbounded.
struct Box {
  Vector lower;
  Vector upper;

  bool contains(const Vector& x) const;
  Vector project(const Vector& x) const;
};

enum class TruthSource { ClosedForm, GridSearch };

/// Reference optimum. Utilities exclude the fixed transfer, which is reported
/// separately (linear environments only), so they compare directly with solver traces.
struct GroundTruth {
  Vector a_star;
  Vector t_star;
  double u1_star = 0.0;
  double u2_star = 0.0;
  TruthSource source = TruthSource::ClosedForm;
  std::optional<double> transfer;
};

/// Environment definition as read from a config file. `params` holds every
/// parameter after defaults are applied.
struct EnvSpec {
  std::string id;
  std::map<std::string, double> params;
  bool analytic = true;
  double reservation_utility = 0.0;
};

/// Outcome-to-wage structure shared by the nonlinear environments:
/// X = h(a, z), w(X) = max(lambda + mu * sigmoid((X - a0) / s), w_min), u1 = E[X - w],
/// u2 = E[g(w)] - c a^2 / 2.
class SignalModel {
 public:
  virtual ~SignalModel() = default;

  virtual double outcome(double a, double z) const = 0;
  /// sigmoid((x - a0) / s)
  virtual double wage_index(double x) const = 0;
  virtual double wage_utility(double w) const = 0;
  virtual double wage_floor() const = 0;
  virtual double effort_cost(double a) const = 0;

  /// Mean over samples of g(max(lambda + mu * index_k, w_min)), summed in index order.
  virtual double mean_wage_utility(std::span<const double> index, double lambda, double mu) const = 0;
  /// Mean over samples of max(lambda + mu * index_k, w_min).
  double mean_wage(std::span<const double> index, double lambda, double mu) const;

  /// The contract's wage at outcome x for t = (lambda, mu), floored.
  double wage(double x, const Vector& t) const;
};

class Environment {
 public:
  explicit Environment(EnvSpec spec) : spec_(std::move(spec)) {}
  virtual ~Environment() = default;

  const EnvSpec& spec() const { return spec_; }
  const std::string& id() const { return spec_.id; }
  double param(const std::string& name) const;

  virtual int action_dim() const = 0;
  virtual int contract_dim() const = 0;
  virtual bool linear() const = 0;
  bool analytic() const { return spec_.analytic; }

  /// Noise law per coordinate of z; empty for analytic evaluation.
  virtual std::vector<NoiseKind> noise() const = 0;
  int noise_dim() const { return static_cast<int>(noise().size()); }

  virtual Utilities<double> utilities(std::span<const double> a, std::span<const double> t,
                                      std::span<const double> z) const = 0;
  virtual Utilities<HyperDual> utilities(std::span<const HyperDual> a, std::span<const HyperDual> t,
                                         std::span<const double> z) const = 0;

  virtual Box action_box() const;
  virtual Box contract_box() const;
  virtual std::vector<std::string> contract_names() const = 0;

  /// Closed-form optimum; throws Unsupported for nonlinear environments.
  virtual GroundTruth closed_form() const;
  /// Closed-form agent best response to t; throws Unsupported for nonlinear environments.
  virtual Vector best_response(const Vector& t) const;
  /// Transfer s making the agent's utility at its best response equal to U_res.
  /// Sampled environments average over `draws`.
  virtual double participation_transfer(const Vector& slopes, double reservation_utility,
                                        const SampleMatrix& draws) const;

  virtual const SignalModel* signal() const { return nullptr; }

  /// Draw matrix for a payload: transformed uniforms, or a single empty row when analytic.
  SampleMatrix draws(const CrnPayload& payload) const;
  /// Single empty row: the draw matrix used by analytic evaluation.
  static SampleMatrix analytic_draws() { return SampleMatrix(1, 0); }

 protected:
  /// +1 when the transfer is paid to the agent, -1 when the agent pays it (premium).
  virtual double transfer_sign() const { return 1.0; }

 private:
  EnvSpec spec_;
};

/// One party's per-sample utility, usable with the autodiff operations.
struct Objective {
  const Environment* env;
  Party party;

  template <class T>
  T operator()(std::span<const T> a, std::span<const T> t, std::span<const double> z) const {
    auto u = env->utilities(a, t, z);
    return party == Party::Principal ? u.principal : u.agent;
  }
};

/// Fixed-order sample means of both utilities.
Utilities<double> eval_u(const Environment& env, const Vector& a, const Vector& t, const SampleMatrix& draws);

std::vector<std::string> environment_ids();
/// Default parameter record for an environment id; throws InvalidConfig for unknown ids.
std::map<std::string, double> default_params(const std::string& id);
/// Builds an environment from id + overrides. Unknown ids or parameter names, and
/// invalid values, raise InvalidConfig.
/// `analytic` defaults to true for linear environments; nonlinear ones are always sampled.
std::unique_ptr<Environment> make_environment(const std::string& id,
                                              const std::map<std::string, double>& overrides = {},
                                              std::optional<bool> analytic = std::nullopt,
                                              double reservation_utility = 0.0);
std::unique_ptr<Environment> make_environment(const EnvSpec& spec);

}  // namespace bilevel
