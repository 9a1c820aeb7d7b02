#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace mlbcap {

// std::uniform_int_distribution and std::shuffle are implementation-defined;
// these helpers only rely on the standardized mt19937_64 output sequence so
// seeded results are portable across standard libraries.

inline std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t bound) {
  if (bound <= 1) return 0;
  const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % bound);
  std::uint64_t draw;
  do {
    draw = rng();
  } while (draw >= limit);
  return draw % bound;
}

/// Partial Fisher-Yates: the first `count` elements become a uniform sample.
template <typename T>
void partial_shuffle(std::vector<T>& items, std::size_t count,
                     std::mt19937_64& rng) {
  const std::size_t n = items.size();
  for (std::size_t i = 0; i < count && i + 1 < n; ++i) {
    const std::size_t j = i + uniform_below(rng, n - i);
    using std::swap;
    swap(items[i], items[j]);
  }
}

template <typename T>
void portable_shuffle(std::vector<T>& items, std::mt19937_64& rng) {
  partial_shuffle(items, items.size(), rng);
}

}  // namespace mlbcap
