#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>

namespace rac {

// Seeded generator with transforms implemented here rather than through
// <random> distributions, so draws are identical across standard libraries
// and the full state round-trips through a checkpoint.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer on [0, n); n must be positive.
  std::size_t uniform_index(std::size_t n);

  // Standard normal via Box-Muller; consumes exactly two 64-bit draws.
  double normal();

  // Index drawn from a discrete distribution given by non-negative weights.
  std::size_t categorical(std::span<const double> probabilities);

  std::string state() const;
  void set_state(const std::string& text);

  bool operator==(const Rng& other) const { return engine_ == other.engine_; }

 private:
  std::mt19937_64 engine_;
};

// SplitMix64 finalizer; used to derive independent seeds from (seed, a, b).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

}  // namespace rac
