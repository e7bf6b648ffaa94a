#include "eebt/rng.hpp"

#include <cmath>
#include <limits>

#include "eebt/error.hpp"

namespace eebt {

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
  std::uint64_t z = (x += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t rotl(std::uint64_t x, int k) {
  return (x << k) | (x >> (64 - k));
}

}  // namespace

Rng::Rng(std::uint64_t seed) : seed_(seed) {
  std::uint64_t x = seed;
  for (auto& s : s_) s = splitmix64(x);
}

std::uint64_t Rng::next_u64() {
  const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t Rng::below(std::uint64_t bound) {
  if (bound == 0) throw ValidationError("Rng::below requires bound > 0");
  // Rejection on the top of the range keeps the result unbiased.
  const std::uint64_t limit =
      std::numeric_limits<std::uint64_t>::max() -
      std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t r;
  do {
    r = next_u64();
  } while (r >= limit);
  return r % bound;
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u, v, s;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double mul = std::sqrt(-2.0 * portable_log(s) / s);
  spare_ = v * mul;
  has_spare_ = true;
  return u * mul;
}

std::uint64_t derive_seed(std::uint64_t root, std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = root;
  std::uint64_t h = splitmix64(x);
  x = h ^ (a * 0xD1B54A32D192ED03ULL);
  h = splitmix64(x);
  x = h ^ (b * 0x8CB92BA72F3D8DD7ULL);
  return splitmix64(x);
}

Tensor rng_normal(Rng& rng, const Shape& shape, float stddev) {
  if (shape.empty() || shape_volume(shape) == 0) {
    throw ValidationError("rng_normal: shape must be nonempty, got " +
                          shape_to_string(shape));
  }
  Tensor out(shape);
  for (auto& v : out.values()) {
    v = static_cast<float>(rng.normal() * stddev);
  }
  return out;
}

double portable_log(double x) {
  if (!(x > 0.0) || !std::isfinite(x)) {
    throw ValidationError("portable_log requires a finite positive argument");
  }
  int exponent = 0;
  double m = std::frexp(x, &exponent);  // x = m * 2^exponent, m in [0.5, 1)
  constexpr double kSqrtHalf = 0.70710678118654752440;
  if (m < kSqrtHalf) {
    m *= 2.0;
    --exponent;
  }
  // log(m) = 2 atanh(s), |s| <= 0.1716
  const double s = (m - 1.0) / (m + 1.0);
  const double s2 = s * s;
  double term = s;
  double sum = 0.0;
  for (int k = 1; k <= 41; k += 2) {
    sum += term / k;
    term *= s2;
  }
  constexpr double kLn2 = 0.69314718055994530942;
  return exponent * kLn2 + 2.0 * sum;
}

}  // namespace eebt
