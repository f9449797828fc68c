#ifndef AUDRON_RNG_HPP
#define AUDRON_RNG_HPP

#include <cmath>
#include <cstdint>

namespace audron {

// SplitMix64 finalizer (Steele, Lea, Flood). Public-domain constants.
inline uint64_t splitmix64_mix(uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

constexpr uint64_t kGoldenGamma = 0x9e3779b97f4a7c15ull;

// Derives an independent stream seed from a master seed and a stream key.
// Order-independent, so clips/epochs can be generated in parallel.
inline uint64_t split_stream(uint64_t master, uint64_t key) {
  return splitmix64_mix(master + (key + 1) * kGoldenGamma);
}

// Portable 64-bit generator: SplitMix64. Identical output on every platform
// for a given seed, unlike std:: distributions.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    state_ += kGoldenGamma;
    return splitmix64_mix(state_);
  }

  // Uniform in [0, 1), 53-bit resolution.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // Unbiased integer in [0, n) by rejection.
  uint64_t uniform_int(uint64_t n) {
    const uint64_t threshold = -n % n;  // 2^64 mod n
    uint64_t x;
    do {
      x = next_u64();
    } while (x < threshold);
    return x % n;
  }

  // Standard normal via Box-Muller; caches the sine partner.
  double normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    const double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
    const double u2 = next_double();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * 3.14159265358979323846 * u2;
    cached_ = r * std::sin(a);
    have_cached_ = true;
    return r * std::cos(a);
  }

  double normal(double sigma) { return sigma * normal(); }

 private:
  uint64_t state_;
  double cached_ = 0.0;
  bool have_cached_ = false;
};

}  // namespace audron

#endif  // AUDRON_RNG_HPP
