#include <doctest.h>

#include <cmath>

#include "bilevel/autodiff.hpp"
#include "bilevel/environment.hpp"
#include "bilevel/errors.hpp"

using namespace bilevel;

namespace {

// Second derivative of g at x from a hyper-dual number seeded with fu = fv = 1.
template <class G>
HyperDual seed(G g, double x) {
  return g(HyperDual{x, 1.0, 1.0, 0.0});
}

struct ProductSquare {  // a1^2 a2
  template <class T>
  T operator()(std::span<const T> a, std::span<const T>, std::span<const double>) const {
    return a[0] * a[0] * a[1];
  }
};

struct DiagonalQuadratic {  // -(2 a1^2 + 4 a2^2) / 2
  template <class T>
  T operator()(std::span<const T> a, std::span<const T>, std::span<const double>) const {
    return -0.5 * (2.0 * a[0] * a[0] + 4.0 * a[1] * a[1]);
  }
};

struct Tracking {  // -(a - t)^2 / 2
  template <class T>
  T operator()(std::span<const T> a, std::span<const T> t, std::span<const double>) const {
    const T gap = a[0] - t[0];
    return -0.5 * gap * gap;
  }
};

struct Separable {  // a^3 + exp(t)
  template <class T>
  T operator()(std::span<const T> a, std::span<const T> t, std::span<const double>) const {
    using std::exp;
    return a[0] * a[0] * a[0] + exp(t[0]);
  }
};

struct LinearInA {
  template <class T>
  T operator()(std::span<const T> a, std::span<const T> t, std::span<const double>) const {
    return 3.0 * a[0] - 2.0 * a[1] + t[0] * t[0];
  }
};

// Linear-quadratic agent with a transfer: s + b a - r b^2 sigma^2 / 2 - c a^2 / 2, t = (s, b).
struct AgentWithTransfer {
  double r = 1.0, c = 1.0, sigma = 0.1;
  template <class T>
  T operator()(std::span<const T> a, std::span<const T> t, std::span<const double>) const {
    return t[0] + t[1] * a[0] - 0.5 * r * t[1] * t[1] * sigma * sigma - 0.5 * c * a[0] * a[0];
  }
};

struct LinearWage {  // b x with x = a + z
  template <class T>
  T operator()(std::span<const T> a, std::span<const T> t, std::span<const double> z) const {
    return t[0] * (a[0] + z[0]);
  }
};

struct LogOfDraw {
  template <class T>
  T operator()(std::span<const T> a, std::span<const T>, std::span<const double> z) const {
    using std::log;
    return log(a[0] * z[0]);
  }
};

Vector vec(std::initializer_list<double> values) {
  Vector v(static_cast<Eigen::Index>(values.size()));
  Eigen::Index i = 0;
  for (const double x : values) v[i++] = x;
  return v;
}

const SampleMatrix kNone = Environment::analytic_draws();

}  // namespace

TEST_SUITE("autodiff") {
  TEST_CASE("hyper-dual elementary functions carry exact second derivatives") {
    const double x = 0.7;
    using std::exp;
    using std::log;
    using std::sqrt;
    using std::tanh;

    HyperDual e = seed([](auto v) { return exp(v); }, x);
    CHECK(e.f == doctest::Approx(std::exp(x)));
    CHECK(e.fu == doctest::Approx(std::exp(x)));
    CHECK(e.fuv == doctest::Approx(std::exp(x)));

    HyperDual l = seed([](auto v) { return log(v); }, x);
    CHECK(l.fu == doctest::Approx(1.0 / x));
    CHECK(l.fuv == doctest::Approx(-1.0 / (x * x)));

    HyperDual s = seed([](auto v) { return sqrt(v); }, x);
    CHECK(s.fu == doctest::Approx(0.5 / std::sqrt(x)));
    CHECK(s.fuv == doctest::Approx(-0.25 * std::pow(x, -1.5)));

    HyperDual p = seed([](auto v) { return pow(v, -0.2); }, x);
    CHECK(p.fu == doctest::Approx(-0.2 * std::pow(x, -1.2)));
    CHECK(p.fuv == doctest::Approx(0.24 * std::pow(x, -2.2)));

    const double th = std::tanh(x);
    HyperDual t = seed([](auto v) { return tanh(v); }, x);
    CHECK(t.fu == doctest::Approx(1.0 - th * th));
    CHECK(t.fuv == doctest::Approx(-2.0 * th * (1.0 - th * th)));

    const double sg = 1.0 / (1.0 + std::exp(-x));
    HyperDual g = seed([](auto v) { return sigmoid(v); }, x);
    CHECK(g.f == doctest::Approx(sg));
    CHECK(g.fu == doctest::Approx(sg * (1.0 - sg)));
    CHECK(g.fuv == doctest::Approx(sg * (1.0 - sg) * (1.0 - 2.0 * sg)));

    HyperDual q = seed([](auto v) { return 1.0 / (v * v); }, x);
    CHECK(q.fu == doctest::Approx(-2.0 / (x * x * x)));
    CHECK(q.fuv == doctest::Approx(6.0 / (x * x * x * x)));

    // Mixed partial of u v along independent directions.
    const HyperDual u{2.0, 1.0, 0.0, 0.0}, v{3.0, 0.0, 1.0, 0.0};
    const HyperDual uv = u * v / (u + v);
    CHECK(uv.fuv == doctest::Approx(2.0 * 2.0 * 3.0 / 125.0));  // d2/dudv of uv/(u+v) = 2uv/(u+v)^3
  }

  TEST_CASE("constants have zero tangents") {
    const HyperDual c{2.5};
    CHECK(c.fu == 0.0);
    CHECK(c.fv == 0.0);
    CHECK(c.fuv == 0.0);
    using std::exp;
    const HyperDual e = exp(c);
    CHECK(e.fu == 0.0);
    CHECK(e.fuv == 0.0);
  }

  TEST_CASE("floor clamp") {
    const HyperDual below{0.1, 1.0, 1.0, 0.5};
    const HyperDual clamped = floor_at(below, 0.25);
    CHECK(clamped.f == 0.25);
    CHECK(clamped.fu == 0.0);
    CHECK(clamped.fv == 0.0);
    CHECK(clamped.fuv == 0.0);

    // At the kink the unclamped branch is used.
    const HyperDual tie{0.25, 1.0, 2.0, 0.5};
    const HyperDual kept = floor_at(tie, 0.25);
    CHECK(kept.fu == 1.0);
    CHECK(kept.fv == 2.0);
    CHECK(kept.fuv == 0.5);

    const HyperDual above{0.4, 1.0, 1.0, 0.0};
    CHECK(floor_at(above, 0.25).fu == 1.0);
    CHECK(floor_at(0.1, 0.25) == 0.25);
    CHECK(floor_at(0.25, 0.25) == 0.25);
  }

  TEST_CASE("gradients") {
    CHECK(grad_a(ProductSquare{}, vec({2, 3}), vec({0}), kNone).isApprox(vec({12, 4})));
    CHECK(grad_a(Separable{}, vec({0}), vec({0.3}), kNone)[0] == 0.0);
    CHECK(grad_t(DiagonalQuadratic{}, vec({1, 2}), vec({0.5}), kNone).isZero());

    const auto hm = make_environment("holmstrom_milgrom");
    const Objective agent{hm.get(), Party::Agent};
    const Objective principal{hm.get(), Party::Principal};
    CHECK(grad_a(agent, vec({0}), vec({1}), kNone)[0] == doctest::Approx(1.0));
    CHECK(grad_t(principal, vec({0}), vec({1}), kNone)[0] == doctest::Approx(-0.01));

    SampleMatrix z(4, 1);
    z << 0.5, -1.0, 2.0, 0.25;
    CHECK(grad_t(LinearWage{}, vec({1.0}), vec({0.3}), z)[0] == doctest::Approx(1.0 + z.mean()));
  }

  TEST_CASE("Hessian-vector products") {
    CHECK(hvp_aa(DiagonalQuadratic{}, vec({0.3, -1}), vec({0}), kNone, vec({1, 1})).isApprox(vec({-2, -4})));
    CHECK(hvp_aa(LinearInA{}, vec({0.3, -1}), vec({2}), kNone, vec({1, 1})).isZero());
    CHECK(hvp_aa(ProductSquare{}, vec({2, 3}), vec({0}), kNone, vec({1, 1})).isApprox(vec({10, 4})));
  }

  TEST_CASE("mixed Hessian-vector products") {
    CHECK(mixed_hvp_ta(Tracking{}, vec({0.4}), vec({1.3}), kNone, vec({0.7}))[0] == doctest::Approx(0.7));
    CHECK(mixed_hvp_ta(Separable{}, vec({0.4}), vec({1.3}), kNone, vec({0.7})).isZero());
    const Vector m = mixed_hvp_ta(AgentWithTransfer{}, vec({0.2}), vec({0.1, 0.9}), kNone, vec({0.6}));
    CHECK(m[0] == 0.0);
    CHECK(m[1] == doctest::Approx(0.6));
  }

  TEST_CASE("sample means over reals equal the value slot of hyper-dual evaluation") {
    const auto env = make_environment("laplace_threshold");
    const SampleMatrix z = env->draws(make_payload(5, 1, 64, true));
    const Objective agent{env.get(), Party::Agent};
    const Vector a = vec({0.3}), t = vec({0.5, 1.7});
    double mean = 0.0;
    const std::vector<HyperDual> ah{HyperDual{0.3}}, th{HyperDual{0.5}, HyperDual{1.7}};
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
      const std::span<const double> row(z.data() + i * z.cols(), static_cast<std::size_t>(z.cols()));
      mean += agent(std::span<const HyperDual>(ah), std::span<const HyperDual>(th), row).f;
    }
    CHECK(sample_mean(agent, a, t, z) == doctest::Approx(mean / z.rows()).epsilon(1e-15));
  }

  TEST_CASE("non-finite samples are reported with their index") {
    SampleMatrix z(4, 1);
    z << 1.0, 2.0, -1.0, 3.0;
    try {
      grad_a(LogOfDraw{}, vec({1.0}), vec({0.0}), z);
      FAIL("expected NumericalError");
    } catch (const NumericalError& e) {
      CHECK(e.where() == 2);
    }
    CHECK_THROWS_AS(grad_a(LogOfDraw{}, vec({1.0}), vec({0.0}), SampleMatrix(0, 1)), InvalidConfig);
  }
}
