#include "bilevel/qmc.hpp"

#include <bit>
#include <cmath>
#include <string>

#include "bilevel/errors.hpp"

namespace bilevel {

namespace {

constexpr std::array<SobolPolynomial, kMaxSobolDim - 1> kJoeKuo{{
    {1, 0, {1}},
    {2, 1, {1, 3}},
    {3, 1, {1, 3, 1}},
    {3, 2, {1, 1, 1}},
    {4, 1, {1, 1, 3, 3}},
    {4, 4, {1, 3, 5, 13}},
    {5, 2, {1, 1, 5, 5, 17}},
    {5, 4, {1, 1, 5, 5, 5}},
    {5, 7, {1, 1, 7, 11, 19}},
    {5, 11, {1, 1, 5, 1, 1}},
    {5, 13, {1, 1, 1, 3, 11}},
    {5, 14, {1, 3, 5, 5, 31}},
    {6, 1, {1, 3, 3, 9, 7, 49}},
    {6, 13, {1, 1, 1, 15, 21, 21}},
    {6, 16, {1, 3, 1, 13, 27, 49}},
}};

constexpr double kUnit = 0x1p-52;
constexpr double kLowest = 0x1p-53;
constexpr double kHighest = 1.0 - 0x1p-53;

double nudge(double u) { return std::fmin(std::fmax(u, kLowest), kHighest); }

std::uint64_t start_index(std::uint64_t seed) { return 1 + (seed % kSeedModulus) * kSeedStride; }

CrnPayload build_payload(std::uint64_t seed, int dim, int n, bool antithetic, int epoch) {
  if (n < 1) throw InvalidConfig("payload size must be positive, got " + std::to_string(n));
  if (antithetic && n % 2 != 0) {
    throw InvalidConfig("antithetic payload needs an even size, got " + std::to_string(n));
  }
  const int base_rows = antithetic ? n / 2 : n;
  const std::uint64_t first =
      start_index(seed) + static_cast<std::uint64_t>(epoch) * static_cast<std::uint64_t>(base_rows);

  CrnPayload payload{seed, dim, n, antithetic, epoch, SampleMatrix(n, dim)};
  payload.uniforms.topRows(base_rows) = sobol_block(dim, first, base_rows);
  if (antithetic) {
    payload.uniforms.bottomRows(base_rows) = (1.0 - payload.uniforms.topRows(base_rows).array()).matrix();
  }
  return payload;
}

}  // namespace

void NoiseKind::validate() const {
  if (!(scale > 0.0) || !std::isfinite(scale)) {
    throw InvalidConfig("noise scale must be positive, got " + std::to_string(scale));
  }
}

const SobolDirections& SobolDirections::joe_kuo() {
  static const SobolDirections table{kJoeKuo};
  return table;
}

SobolDirections::SobolDirections(std::span<const SobolPolynomial> polynomials) {
  v_.resize(polynomials.size() + 1);
  for (int bit = 0; bit < kBits; ++bit) v_[0][bit] = std::uint64_t{1} << (kBits - 1 - bit);

  for (std::size_t d = 0; d < polynomials.size(); ++d) {
    const auto& poly = polynomials[d];
    auto& v = v_[d + 1];
    const unsigned s = poly.degree;
    for (unsigned i = 0; i < s && i < static_cast<unsigned>(kBits); ++i) {
      v[i] = static_cast<std::uint64_t>(poly.initial[i]) << (kBits - 1 - i);
    }
    for (unsigned i = s; i < static_cast<unsigned>(kBits); ++i) {
      std::uint64_t value = v[i - s] ^ (v[i - s] >> s);
      for (unsigned k = 1; k < s; ++k) {
        if ((poly.coefficients >> (s - 1 - k)) & 1u) value ^= v[i - k];
      }
      v[i] = value;
    }
  }
}

SobolDirections SobolDirections::flipped(int dim, int bit, int position) const {
  if (dim < 0 || dim >= max_dim() || bit < 0 || bit >= kBits || position < 0 || position >= kBits) {
    throw InvalidConfig("direction number index out of range");
  }
  SobolDirections copy = *this;
  copy.v_[dim][bit] ^= std::uint64_t{1} << position;
  return copy;
}

SampleMatrix sobol_block(int dim, std::uint64_t first, int n, const SobolDirections& directions) {
  if (dim < 1 || dim > directions.max_dim()) {
    throw UnsupportedDimension("Sobol dimension " + std::to_string(dim) + " outside [1, " +
                               std::to_string(directions.max_dim()) + "]");
  }
  if (n < 0) throw InvalidConfig("negative Sobol point count");
  if (first + static_cast<std::uint64_t>(n) >= (std::uint64_t{1} << SobolDirections::kBits)) {
    throw InvalidConfig("Sobol index range exceeds 2^52");
  }

  SampleMatrix points(n, dim);
  if (n == 0) return points;

  // Direct evaluation of the first point, then Gray-code increments.
  std::vector<std::uint64_t> state(dim, 0);
  const std::uint64_t gray = first ^ (first >> 1);
  for (int j = 0; j < dim; ++j) {
    for (int bit = 0; bit < SobolDirections::kBits; ++bit) {
      if ((gray >> bit) & 1u) state[j] ^= directions.direction(j, bit);
    }
  }
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < dim; ++j) points(i, j) = nudge(static_cast<double>(state[j]) * kUnit);
    // Moving from index k to k+1 flips the Gray-code bit at the lowest zero bit of k.
    const std::uint64_t k = first + static_cast<std::uint64_t>(i);
    const int flip = std::countr_one(k);
    for (int j = 0; j < dim; ++j) state[j] ^= directions.direction(j, flip);
  }
  return points;
}

SampleMatrix sobol_points(int dim, int n, std::uint64_t seed, const SobolDirections& directions) {
  if (n < 1) throw InvalidConfig("Sobol point count must be positive");
  return sobol_block(dim, start_index(seed), n, directions);
}

CrnPayload make_payload(std::uint64_t seed, int dim, int n, bool antithetic) {
  return build_payload(seed, dim, n, antithetic, 0);
}

CrnPayload refresh(const CrnPayload& payload, long step, long refresh_period) {
  if (refresh_period < 1) throw InvalidConfig("refresh period must be positive");
  if (step > 0 && step % refresh_period == 0) {
    return build_payload(payload.seed, payload.dim, payload.n, payload.antithetic, payload.epoch + 1);
  }
  return payload;
}

CrnPayload held_out_batch(std::uint64_t seed, int dim, int size) {
  return build_payload(seed, dim, size, size % 2 == 0, 0);
}

double normal_quantile(double p) {
  // Wichura, Algorithm AS241 (PPND16), Applied Statistics 37 (1988).
  const double q = p - 0.5;
  if (std::fabs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    return q *
           (((((((2509.0809287301226727 * r + 33430.575583588128105) * r + 67265.770927008700853) * r +
                45921.953931549871457) * r + 13731.693765509461125) * r + 1971.5909503065514427) * r +
             133.14166789178437745) * r + 3.387132872796366608) /
           (((((((5226.495278852545925 * r + 28729.085735721942674) * r + 39307.89580009271061) * r +
                21213.794301586595867) * r + 5394.1960214247511077) * r + 687.1870074920579083) * r +
             42.313330701600911252) * r + 1.0);
  }
  double r = q < 0.0 ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double value;
  if (r <= 5.0) {
    r -= 1.6;
    value = (((((((7.7454501427834140764e-4 * r + 0.0227238449892691845833) * r + 0.24178072517745061177) * r +
                 1.27045825245236838258) * r + 3.64784832476320460504) * r + 5.7694972214606914055) * r +
              4.6303378461565452959) * r + 1.42343711074968357734) /
            (((((((1.05075007164441684324e-9 * r + 5.475938084995344946e-4) * r + 0.0151986665636164571966) * r +
                 0.14810397642748007459) * r + 0.68976733498510000455) * r + 1.6763848301838038494) * r +
              2.05319162663775882187) * r + 1.0);
  } else {
    r -= 5.0;
    value = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r + 0.0012426609473880784386) * r +
                 0.026532189526576123093) * r + 0.29656057182850489123) * r + 1.7848265399172913358) * r +
              5.4637849111641143699) * r + 6.6579046435011037772) /
            (((((((2.04426310338993978564e-15 * r + 1.4215117583164458887e-7) * r + 1.8463183175100546818e-5) * r +
                 7.868691311456132591e-4) * r + 0.0148753612908506148525) * r + 0.13692988092273580531) * r +
              0.59983220655588793769) * r + 1.0);
  }
  return q < 0.0 ? -value : value;
}

double transform(double u, const NoiseKind& kind) {
  if (!(u > 0.0 && u < 1.0)) throw DomainError("uniform " + std::to_string(u) + " outside (0, 1)");
  double unit = 0.0;
  switch (kind.family) {
    case NoiseFamily::Normal:
      unit = normal_quantile(u);
      break;
    case NoiseFamily::Logistic:
      unit = std::log(u / (1.0 - u));
      break;
    case NoiseFamily::Laplace: {
      const double centered = u - 0.5;
      unit = centered == 0.0 ? 0.0 : -std::copysign(1.0, centered) * std::log1p(-2.0 * std::fabs(centered));
      break;
    }
  }
  return kind.location + kind.scale * unit;
}

SampleMatrix transform_payload(const CrnPayload& payload, std::span<const NoiseKind> kinds) {
  if (static_cast<int>(kinds.size()) != payload.dim) {
    throw InvalidConfig("payload has " + std::to_string(payload.dim) + " coordinates but " +
                        std::to_string(kinds.size()) + " noise laws were given");
  }
  for (const auto& kind : kinds) kind.validate();
  SampleMatrix draws(payload.n, payload.dim);
  for (int i = 0; i < payload.n; ++i) {
    for (int j = 0; j < payload.dim; ++j) draws(i, j) = transform(payload.uniforms(i, j), kinds[j]);
  }
  return draws;
}

}  // namespace bilevel
