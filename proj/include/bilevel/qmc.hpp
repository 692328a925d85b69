#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace bilevel {

/// Row-major so that each sample is a contiguous span.
using SampleMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class NoiseFamily { Normal, Logistic, Laplace };

/// Location-scale noise law used to turn uniforms into draws.
struct NoiseKind {
  NoiseFamily family = NoiseFamily::Normal;
  double location = 0.0;
  double scale = 1.0;

  /// Throws InvalidConfig unless scale > 0.
  void validate() const;
};

/// Primitive polynomial data and initial direction numbers for one Sobol dimension
/// (dimension 1 is the van der Corput sequence and has no entry).
struct SobolPolynomial {
  unsigned degree;
  std::uint32_t coefficients;
  std::array<std::uint32_t, 8> initial;
};

/// Direction numbers for up to kMaxSobolDim dimensions, 52 bits per coordinate.
class SobolDirections {
 public:
  static constexpr int kBits = 52;

  /// Joe & Kuo (new-joe-kuo-6.21201) polynomials for dimensions 2..16.
  static const SobolDirections& joe_kuo();

  explicit SobolDirections(std::span<const SobolPolynomial> polynomials);

  int max_dim() const { return static_cast<int>(v_.size()); }
  std::uint64_t direction(int dim, int bit) const { return v_[dim][bit]; }

  /// Copy with one bit of one direction number inverted (fault injection).
  SobolDirections flipped(int dim, int bit, int position) const;

 private:
  std::vector<std::array<std::uint64_t, kBits>> v_;
};

inline constexpr int kMaxSobolDim = 16;

/// Distance in the Sobol index space between consecutive seeds.
inline constexpr std::uint64_t kSeedStride = std::uint64_t{1} << 24;
inline constexpr std::uint64_t kSeedModulus = std::uint64_t{1} << 27;

/// Gray-code ordered Sobol points with indices [first, first + n), nudged into
/// [2^-53, 1 - 2^-53].
SampleMatrix sobol_block(int dim, std::uint64_t first, int n,
                         const SobolDirections& directions = SobolDirections::joe_kuo());

/// n points of the dim-dimensional Sobol sequence. Seed s starts the sequence at index
/// 1 + (s mod 2^27) * 2^24, so seed 0 is the plain sequence without its zero point.
SampleMatrix sobol_points(int dim, int n, std::uint64_t seed,
                          const SobolDirections& directions = SobolDirections::joe_kuo());

/// Common-random-number payload: one batch of uniforms shared by every evaluation
/// inside an outer step.
struct CrnPayload {
  std::uint64_t seed = 0;
  int dim = 0;
  int n = 0;
  bool antithetic = false;
  int epoch = 0;
  SampleMatrix uniforms;
};

/// First half Sobol rows, second half their reflections 1-u when antithetic.
CrnPayload make_payload(std::uint64_t seed, int dim, int n, bool antithetic);

/// Regenerates the uniforms from (seed, epoch + 1) when step is a positive multiple of R.
CrnPayload refresh(const CrnPayload& payload, long step, long refresh_period);

/// Evaluation batch; paired antithetically whenever size is even. Never refreshed.
CrnPayload held_out_batch(std::uint64_t seed, int dim, int size);

/// Standard normal quantile (Wichura, AS241 PPND16; relative error about 1e-16).
double normal_quantile(double u);

/// location + scale * Q(u) for the unit quantile Q of the family. Throws DomainError
/// unless 0 < u < 1.
double transform(double u, const NoiseKind& kind);

/// Applies transform column-wise; kinds.size() must equal payload.dim.
SampleMatrix transform_payload(const CrnPayload& payload, std::span<const NoiseKind> kinds);

}  // namespace bilevel
