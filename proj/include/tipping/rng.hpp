#ifndef TIPPING_RNG_HPP
#define TIPPING_RNG_HPP

#include <cstdint>
#include <initializer_list>
#include <random>

namespace tipping {

using Seed = std::uint64_t;

// SplitMix64 finalizer. Fixed forever: derived seeds are part of the
// reproducibility contract of every transcript.
std::uint64_t mix64(std::uint64_t x) noexcept;

// seed_k = mix64(seed_{k-1} ^ mix64(index_k + 0x9E3779B97F4A7C15)), starting at
// mix64(master). Used for (master, replication), (replication, agent) and
// (master, cell, replication) streams.
Seed derive_seed(Seed master, std::initializer_list<std::uint64_t> path) noexcept;

// Deterministic stream. uniform() uses the top 53 bits of mt19937_64 so the
// sequence of doubles does not depend on the standard library's distributions.
class Rng {
 public:
  explicit Rng(Seed seed) : engine_(seed) {}

  double uniform() noexcept {
    ++draws_;
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }
  bool bernoulli(double p) noexcept { return uniform() < p; }
  std::uint64_t draws() const noexcept { return draws_; }

 private:
  std::mt19937_64 engine_;
  std::uint64_t draws_ = 0;
};

}  // namespace tipping

#endif
