#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace its {

// Unbiased draw in [0, bound) by rejection. std::uniform_int_distribution is
// implementation-defined, so it cannot back reproducible selections.
inline std::uint64_t bounded_draw(std::mt19937_64& rng, std::uint64_t bound) {
  if (bound <= 1) return 0;
  const std::uint64_t limit = std::mt19937_64::max() - (std::mt19937_64::max() % bound);
  std::uint64_t value = 0;
  do {
    value = rng();
  } while (value >= limit);
  return value % bound;
}

// Seed derived from (seed, key) via SHA-256, for per-item deterministic draws.
std::uint64_t keyed_seed(std::uint64_t seed, std::string_view key);

}  // namespace its
