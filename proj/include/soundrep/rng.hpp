#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace soundrep {

// Seed/stream mixing step. Fixed algorithm: streams must be identical across
// platforms and standard library versions, so no std::<distribution> is used
// anywhere in the project.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

/// xoshiro256** generator with hand-rolled uniform/normal transforms.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& s : state_) s = splitmix64(sm);
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform double in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [lo, hi], both inclusive. Unbiased (rejection sampling).
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const std::uint64_t range = static_cast<std::uint64_t>(hi - lo) + 1;
    if (range == 0) return static_cast<std::int64_t>(next_u64());  // full 64-bit span
    const std::uint64_t limit = (0ull - range) % range;
    std::uint64_t x;
    unsigned __int128 m;
    do {
      x = next_u64();
      m = static_cast<unsigned __int128>(x) * range;
    } while (static_cast<std::uint64_t>(m) < limit);
    return lo + static_cast<std::int64_t>(m >> 64);
  }

  /// Standard normal via Box-Muller (caches the spare deviate).
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    while (u1 <= 0.0) u1 = uniform();  // avoid log(0)
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    constexpr double kTwoPi = 6.283185307179586476925286766559;
    spare_ = r * std::sin(kTwoPi * u2);
    has_spare_ = true;
    return r * std::cos(kTwoPi * u2);
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  std::uint64_t state_[4];
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Counter-based substream derivation from a master seed.
///
/// Every consumer of randomness asks for a fresh stream keyed by
/// (purpose, a, b, c) -- e.g. ("view", epoch, clip, view_index) -- so that
/// parallel batch assembly or a change in iteration order elsewhere can never
/// perturb the draws seen by any one consumer.
class RngScheme {
 public:
  explicit RngScheme(std::uint64_t master_seed) : master_(master_seed) {}

  Rng stream(std::string_view purpose, std::uint64_t a = 0, std::uint64_t b = 0,
             std::uint64_t c = 0) const {
    std::uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a over the purpose tag
    for (char ch : purpose) {
      h ^= static_cast<unsigned char>(ch);
      h *= 0x100000001b3ull;
    }
    std::uint64_t s = master_;
    std::uint64_t key = splitmix64(s);
    s ^= h;
    key ^= splitmix64(s);
    s ^= a + 0x9e3779b97f4a7c15ull;
    key ^= splitmix64(s);
    s ^= b + 0x7f4a7c159e3779b9ull;
    key ^= splitmix64(s);
    s ^= c + 0x85ebca6b2b2ae35ull;
    key ^= splitmix64(s);
    return Rng(key);
  }

  std::uint64_t master() const { return master_; }

 private:
  std::uint64_t master_;
};

}  // namespace soundrep
