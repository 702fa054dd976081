#pragma once

#include <cmath>
#include <cstdint>

#include "pancal/types.hpp"

namespace pancal {

inline uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Deterministic PRNG (xoshiro256++) used for every stochastic choice in the
/// library so that identical seeds give identical runs on any platform.
/// Independent streams are derived with stream(), which hashes a tag into a
/// fresh seed; sub-streams never overlap the parent sequence in practice.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) {
    uint64_t sm = seed;
    for (auto& w : s_) w = splitmix64(sm);
  }

  uint64_t next_u64() {
    const uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform in [a, b).
  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  /// Uniform integer in [0, n). Requires n > 0.
  uint64_t uniform_index(uint64_t n) {
    // Rejection sampling to avoid modulo bias.
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

  /// Standard normal via Box-Muller.
  double normal() {
    double u1 = uniform();
    const double u2 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
  }

  /// Derives an independent stream keyed by (this rng's seed material, tag).
  Rng stream(uint64_t tag) const {
    uint64_t sm = s_[0] ^ (s_[2] * 0x9e3779b97f4a7c15ULL) ^ (tag + 0x632be59bd9b4e019ULL);
    Rng r(0);
    for (auto& w : r.s_) w = splitmix64(sm);
    return r;
  }

 private:
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  uint64_t s_[4];
};

/// Stable 64-bit hash for mixing structured values into stream tags.
inline uint64_t hash_combine(uint64_t h, uint64_t v) {
  uint64_t sm = h ^ (v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2));
  return splitmix64(sm);
}

inline uint64_t hash_double(uint64_t h, double v) {
  uint64_t bits;
  static_assert(sizeof(bits) == sizeof(v));
  __builtin_memcpy(&bits, &v, sizeof(bits));
  return hash_combine(h, bits);
}

inline uint64_t hash_pose(uint64_t h, const Pose& pose) {
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) h = hash_double(h, pose.rotation(r, c));
  for (int i = 0; i < 3; ++i) h = hash_double(h, pose.translation[i]);
  return h;
}

}  // namespace pancal
