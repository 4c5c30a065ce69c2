#pragma once

#include <cstdint>
#include <vector>

namespace fcre {

// Deterministic counter-based generator. The exact construction, which pins
// the bit stream across platforms and runs:
//
//   mix(z):      z ^= z >> 30; z *= 0xBF58476D1CE4E5B9;
//                z ^= z >> 27; z *= 0x94D049BB133111EB;
//                z ^= z >> 31; return z;               (splitmix64 finalizer)
//   next_u64():  state += 0x9E3779B97F4A7C15; return mix(state)
//   uniform():   next_u64() >> 11, scaled by 2^-53     -> [0, 1)
//   normal():    Box-Muller from exactly two uniforms,
//                sqrt(-2 ln(1-u1)) * cos(2 pi u2)
//   below(n):    multiply-free rejection on next_u64() % n
//   fork(id):    child seeded with mix(base + GAMMA * (2*id + 1)), where
//                `base` is the seed this generator was constructed with
//
// fork() depends only on the construction seed and the stream id, never on
// how many draws the parent has made, so adding a consumer does not perturb
// any other consumer's stream. Single-owner: never share one instance across
// threads.
class RngState {
 public:
  explicit RngState(std::uint64_t seed) : base_(seed), state_(seed) {}

  std::uint64_t next_u64();

  // Uniform double in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);

  // Uniform integer in [0, n); n must be positive.
  std::size_t below(std::size_t n);

  // Standard normal draw (Box-Muller); consumes exactly two uniforms.
  double normal();

  // Independent child stream keyed by (construction seed, stream id).
  RngState fork(std::uint64_t stream_id) const;

  // In-place Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = below(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t base_;
  std::uint64_t state_;
};

}  // namespace fcre
