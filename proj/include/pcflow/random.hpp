#ifndef PCFLOW_RANDOM_HPP
#define PCFLOW_RANDOM_HPP

#include <cstdint>
#include <random>
#include <vector>

namespace pcflow {

using Rng = std::mt19937_64;

/// Independent generator streams derived from the single user seed.
/// Parameter init uses `seed`, epoch shuffling `seed + 1`, sampling
/// `seed + 2`.
struct SeedStreams {
  std::uint64_t seed = 0;

  Rng init() const { return Rng(seed); }
  Rng shuffle() const { return Rng(seed + 1); }
  Rng sampling() const { return Rng(seed + 2); }
};

/// Uniform integer in [0, n) by rejection; unlike
/// std::uniform_int_distribution the sequence is fixed across standard
/// libraries.
inline std::uint64_t uniform_below(Rng& rng, std::uint64_t n) {
  const std::uint64_t limit = Rng::max() - (Rng::max() % n);
  std::uint64_t draw = rng();
  while (draw >= limit) draw = rng();
  return draw % n;
}

/// Fisher-Yates over `items`.
template <typename T>
void shuffle_in_place(std::vector<T>& items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform_below(rng, i));
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace pcflow

#endif  // PCFLOW_RANDOM_HPP
