#pragma once

#include <cstdint>

#include "eebt/tensor.hpp"

namespace eebt {

// xoshiro256** seeded through splitmix64. Every derived quantity (uniforms,
// normals, permutations) is computed with plain IEEE arithmetic so a seed
// produces the same stream on every conforming platform. Not thread-safe;
// give each concurrent consumer its own instance.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64();

  // Uniform double in [0, 1) with 53 random bits.
  double uniform();

  // Uniform integer in [0, bound). bound must be > 0.
  std::uint64_t below(std::uint64_t bound);

  // Standard normal via the Marsaglia polar method.
  double normal();

 private:
  std::uint64_t seed_;
  std::uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Mixes a root seed with stream identifiers into an independent seed.
std::uint64_t derive_seed(std::uint64_t root, std::uint64_t a, std::uint64_t b = 0);

// Tensor of i.i.d. N(0,1) samples times `stddev`. Throws ValidationError for
// an empty shape or a zero-volume shape.
Tensor rng_normal(Rng& rng, const Shape& shape, float stddev = 1.0f);

// Natural logarithm built from +,-,*,/ only, so results do not depend on the
// platform libm. Accurate to about one ulp for x > 0.
double portable_log(double x);

}  // namespace eebt
