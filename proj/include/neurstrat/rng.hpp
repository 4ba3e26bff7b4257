#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace neurstrat {

// Substream seed: 64-bit mix of (master seed, stage label, index).
std::uint64_t derive_seed(std::uint64_t master, std::string_view label, std::uint64_t index = 0);

// Thin wrapper over mt19937_64. Conversions to doubles are done here rather
// than through <random> distributions so streams are identical across
// standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // [0, 1)
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // (0, 1), never touches the endpoints; used for inverse-transform draws.
  double uniform_open() { return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53; }

  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  double normal();

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

 private:
  std::mt19937_64 engine_;
};

}  // namespace neurstrat
