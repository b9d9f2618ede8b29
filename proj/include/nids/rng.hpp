#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <vector>

namespace nids {

// splitmix64. All randomness in the pipeline flows from explicit 64-bit
// seeds through this generator; nothing reads the wall clock or OS entropy,
// so identical seeds give identical artifacts byte for byte.
inline uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Stateless combine of a seed with a counter, used where a per-element or
// per-step stream is needed (dropout masks, per-epoch shuffles).
inline uint64_t mix_seed(uint64_t a, uint64_t b) {
  uint64_t s = a + 0x9e3779b97f4a7c15ull * (b + 0x632be59bd9b4e019ull);
  return splitmix64(s);
}

inline double u64_to_unit(uint64_t x) {
  return static_cast<double>(x >> 11) * 0x1.0p-53;  // [0, 1)
}

class Rng {
public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() { return splitmix64(state_); }

  double next_double() { return u64_to_unit(next_u64()); }  // [0, 1)

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // Box-Muller, uncached.
  double normal(double mean = 0.0, double stddev = 1.0) {
    double u1 = next_double();
    double u2 = next_double();
    while (u1 <= 0.0) u1 = next_double();
    double z = std::sqrt(-2.0 * std::log(u1)) *
               std::cos(2.0 * std::numbers::pi * u2);
    return mean + stddev * z;
  }

  // Uniform integer in [0, n). Lemire multiply-shift; n must be > 0.
  uint64_t below(uint64_t n) {
    return static_cast<uint64_t>(
        (static_cast<__uint128_t>(next_u64()) * n) >> 64);
  }

private:
  uint64_t state_;
};

// Seeded Fisher-Yates. Self-contained so shuffles are reproducible across
// standard library implementations.
template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rng.below(i));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace nids
