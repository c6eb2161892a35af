#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <utility>

namespace fea2fea {

/// SplitMix64 finalizer. Used to expand one root seed into independent
/// stream seeds: `derive_seed(root, a, b, ...)` folds each tag in turn.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t root) noexcept { return splitmix64(root); }

template <typename... Tags>
constexpr std::uint64_t derive_seed(std::uint64_t root, std::uint64_t tag, Tags... rest) noexcept {
  return derive_seed(splitmix64(root) ^ splitmix64(tag + 0x632BE59BD9B4E019ull), static_cast<std::uint64_t>(rest)...);
}

// Deterministic generator. The distributions are written out by hand so
// results do not depend on the standard library's distribution algorithms.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n), rejection sampled to avoid modulo bias.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = (~std::uint64_t{0}) - (~std::uint64_t{0}) % n;
    std::uint64_t r;
    do {
      r = engine_();
    } while (r >= limit);
    return r % n;
  }

  bool bernoulli(double p) { return uniform() < p; }

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[below(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace fea2fea
