#include "tipping/rng.hpp"

namespace tipping {

std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

Seed derive_seed(Seed master, std::initializer_list<std::uint64_t> path) noexcept {
  Seed h = mix64(master);
  for (std::uint64_t index : path) {
    h = mix64(h ^ mix64(index + 0x9E3779B97F4A7C15ULL));
  }
  return h;
}

}  // namespace tipping
