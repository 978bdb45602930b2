#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace scalelab {

/// SplitMix64 step. Advances `state` and returns the mixed output.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Seed-splitting rule used everywhere: a child component named `label`
/// draws its seed from splitmix64(root XOR fnv1a64(label)). Children are
/// independent streams; re-deriving with the same label is reproducible.
inline std::uint64_t derive_seed(std::uint64_t root, std::string_view label) {
  std::uint64_t s = root ^ fnv1a64(label);
  return splitmix64(s);
}

/// Small deterministic generator (SplitMix64 stream + hand-rolled
/// Box-Muller). Not stdlib distributions: output must be bit-identical
/// across platforms and standard library versions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() { return splitmix64(state_); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Integer in [lo, hi] inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::int64_t>(next_u64() % span);
  }

  /// Standard normal via Box-Muller; caches the second deviate.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform01();  // (0, 1]
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

 private:
  std::uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

/// Gaussian deviate that is a pure function of (seed, t): the same pair
/// always yields the same value no matter how many draws happened before.
inline double gaussian_at(std::uint64_t seed, std::int64_t t) {
  std::uint64_t s = seed ^ (static_cast<std::uint64_t>(t) * 0xd1342543de82ef95ULL + 0x632be59bd9b4e019ULL);
  Rng r(splitmix64(s));
  return r.normal();
}

}  // namespace scalelab
