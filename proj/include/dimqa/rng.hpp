#pragma once

#include <cmath>
#include <cstdint>

namespace dimqa {

// Splittable deterministic PRNG built on the SplitMix64 finalizer.
// Forked streams are keyed, not sequential, so any worker can derive the
// stream for (seed, record, member, ...) without coordination.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  // Independent child stream derived from this stream's current seed and keys.
  // Does not advance the parent.
  [[nodiscard]] Rng fork(std::uint64_t a, std::uint64_t b = 0,
                         std::uint64_t c = 0) const {
    std::uint64_t s = finalize(state_ + 0x9e3779b97f4a7c15ULL);
    s = finalize(s ^ finalize(a + 0xbf58476d1ce4e5b9ULL));
    s = finalize(s ^ finalize(b + 0x94d049bb133111ebULL));
    s = finalize(s ^ finalize(c + 0x2545f4914f6cdd1dULL));
    return Rng(s);
  }

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return finalize(state_);
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [lo, hi], inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::int64_t>(next_u64() % span);
  }

  // Standard normal via Box-Muller; two uniforms consumed per draw.
  double normal() {
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

 private:
  static std::uint64_t finalize(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t state_;
};

}  // namespace dimqa
