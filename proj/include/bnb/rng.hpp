#pragma once

#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <utility>

namespace bnb {

// The single random stream of a game.
//
// Engine: std::mt19937_64 seeded with the 64-bit game seed. Its output sequence is fixed by
// the C++ standard, so the stream is identical on every conforming implementation. Bounded
// draws use rejection sampling on the raw 64-bit output instead of
// std::uniform_int_distribution, whose algorithm is implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  // Uniform integer in [0, bound). bound must be positive.
  std::uint64_t uniform_below(std::uint64_t bound) {
    // 2^64 mod bound: values below this would bias the modulo.
    const std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
      const std::uint64_t x = engine_();
      if (x >= threshold) return x % bound;
    }
  }

  // 1..=sides
  int roll(int sides) { return 1 + static_cast<int>(uniform_below(static_cast<std::uint64_t>(sides))); }

  // Fisher-Yates, high index first; the j for position i is uniform_below(i + 1).
  template <class T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_below(i));
      using std::swap;
      swap(items[i - 1], items[j]);
    }
  }

  friend bool operator==(const Rng&, const Rng&) = default;

 private:
  std::mt19937_64 engine_;
};

}  // namespace bnb
