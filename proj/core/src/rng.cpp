#include "fcre/rng.hpp"

#include <cmath>
#include <limits>

#include "fcre/errors.hpp"

namespace fcre {

namespace {

constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

std::uint64_t mix(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ULL;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBULL;
  z ^= z >> 31;
  return z;
}

}  // namespace

std::uint64_t RngState::next_u64() {
  state_ += kGamma;
  return mix(state_);
}

double RngState::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngState::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

std::size_t RngState::below(std::size_t n) {
  if (n == 0) throw ConfigError("RngState::below: n must be positive");
  const std::uint64_t un = static_cast<std::uint64_t>(n);
  for (;;) {
    const std::uint64_t x = next_u64();
    const std::uint64_t r = x % un;
    // Reject draws from the final partial block to keep the result unbiased.
    if (x - r <= std::numeric_limits<std::uint64_t>::max() - (un - 1)) {
      return static_cast<std::size_t>(r);
    }
  }
}

double RngState::normal() {
  const double u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(1.0 - u1));
  const double theta = 2.0 * 3.14159265358979323846 * u2;
  return r * std::cos(theta);
}

RngState RngState::fork(std::uint64_t stream_id) const {
  return RngState(mix(base_ + kGamma * (2 * stream_id + 1)));
}

}  // namespace fcre
