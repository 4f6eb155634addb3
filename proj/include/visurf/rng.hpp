#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>

namespace visurf {

/**
 * Deterministic splittable PRNG (splitmix64 core).
 *
 * Streams are cheap value types. derive() builds a child stream from a key
 * path without disturbing the parent, so per-(task, rollout) sub-streams can
 * be constructed up front and sampling results never depend on scheduling or
 * call order. All draws are bit-stable across platforms: no std::random
 * distributions are involved anywhere.
 */
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(mix(seed ^ kGamma)) {}

  uint64_t next_u64() {
    state_ += kGamma;
    return mix(state_);
  }

  // Uniform in [0, 1) with 53 mantissa bits.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n). Multiply-shift reduction; n must be > 0.
  uint64_t next_below(uint64_t n) {
    return static_cast<uint64_t>((static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  // Child stream keyed by this stream's current state plus the path values.
  Rng derive(std::initializer_list<uint64_t> path) const {
    uint64_t h = state_;
    for (uint64_t v : path) h = mix(h ^ mix(v + kGamma));
    return Rng(FromState{}, h);
  }

  // Index sampled from an (already normalized) categorical distribution by
  // CDF inversion. Falls back to the last nonzero bucket if rounding leaks
  // past the final cumulative sum.
  int categorical(std::span<const double> probs) {
    const double u = next_double();
    double cum = 0.0;
    int last_positive = 0;
    for (int i = 0; i < static_cast<int>(probs.size()); ++i) {
      if (probs[i] > 0.0) last_positive = i;
      cum += probs[i];
      if (u < cum) return i;
    }
    return last_positive;
  }

 private:
  struct FromState {};
  Rng(FromState, uint64_t raw_state) : state_(raw_state) {}

  static constexpr uint64_t kGamma = 0x9e3779b97f4a7c15ull;

  static uint64_t mix(uint64_t z) {
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ull;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebull;
    z ^= z >> 31;
    return z;
  }

  uint64_t state_;
};

}  // namespace visurf
