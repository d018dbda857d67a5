#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace mfsf {

// Deterministic random stream. Built on mt19937_64 (whose output sequence is
// fixed by the standard) with hand-rolled uniform/normal transforms, because
// the std:: distributions are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  std::uint64_t index(std::uint64_t n);

  // Standard normal via Box-Muller; the second variate is cached.
  double normal();

 private:
  std::mt19937_64 engine_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;

// Labelled seed derivation: every consumer of randomness gets its own stream
// keyed by (master seed, purpose string).
std::uint64_t derive_seed(std::uint64_t master, std::string_view purpose) noexcept;

}  // namespace mfsf
