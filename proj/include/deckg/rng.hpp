#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>

#include "deckg/core.hpp"

namespace deckg {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Derives an independent stream seed from (global seed, purpose tag, index).
// Per-user and per-stage streams all come from here so that any stage can be
// rerun in isolation and reproduce the full pipeline's draws.
inline std::uint64_t derive_seed(std::uint64_t base, std::string_view tag, std::uint64_t index = 0) {
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a over the tag
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  std::uint64_t state = base;
  state ^= splitmix64(h);
  state ^= index * 0x9e3779b97f4a7c15ULL;
  std::uint64_t s = state;
  return splitmix64(s);
}

// mt19937_64 with explicit value mappings. The mappings are spelled out
// (instead of std::uniform_*_distribution) so draws are identical across
// standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform01() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) fail_usage("Rng::below(0)");
    return eng_() % n;
  }

  bool bernoulli(double p) { return uniform01() < p; }

  // Draws an index from an explicit probability vector by CDF inversion.
  std::size_t discrete(std::span<const double> probs) {
    if (probs.empty()) fail_usage("Rng::discrete on empty distribution");
    const double x = uniform01();
    double cum = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      cum += probs[i];
      if (x < cum) return i;
    }
    return probs.size() - 1;  // guard against rounding at the top end
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    // Fisher-Yates with explicit index draws.
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace deckg
