#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

// Deterministic PRNG stack used everywhere randomness is needed, so splits,
// initializations and restarts reproduce bit-for-bit across platforms.
//
// Seeding convention: a user-facing 64-bit seed feeds SplitMix64, whose output
// stream fills the 256-bit state of xoshiro256** (Blackman & Vigna, public
// domain reference constants). Uniform doubles take the top 53 bits; gaussians
// come from Box-Muller on those doubles.

namespace scmine::rng {

struct SplitMix64 {
  std::uint64_t state;

  explicit SplitMix64(std::uint64_t seed) : state(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }
};

class Xoshiro256ss {
 public:
  explicit Xoshiro256ss(std::uint64_t seed) {
    SplitMix64 sm(seed);
    for (auto& word : s_) word = sm.next();
  }

  std::uint64_t next() {
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

  // Uniform in [0, 1) with 53 bits of precision.
  double next_double() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Unbiased uniform integer in [0, n) by rejection.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      const std::uint64_t r = next();
      if (r >= threshold) return r % n;
    }
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  std::uint64_t s_[4];
};

// In-place Fisher-Yates shuffle driven by the generator above.
template <typename T>
void fisher_yates(std::vector<T>& v, Xoshiro256ss& gen) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(gen.below(i));
    std::swap(v[i - 1], v[j]);
  }
}

// Standard-normal source (Box-Muller, caches the spare deviate).
class Gaussian {
 public:
  explicit Gaussian(std::uint64_t seed) : gen_(seed) {}

  double next() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = gen_.next_double();
    double u2 = gen_.next_double();
    while (u1 <= 0.0) u1 = gen_.next_double();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

 private:
  Xoshiro256ss gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Deterministic derived seed for sub-tasks (per-class, per-k, per-restart)
// so results are independent of evaluation order.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  SplitMix64 sm(base ^ (0x9E3779B97F4A7C15ULL * (stream + 1)));
  return sm.next();
}

}  // namespace scmine::rng
