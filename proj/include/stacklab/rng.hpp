#pragma once

#include <cstdint>
#include <random>

namespace stacklab {

// Seedable generator used by every stochastic operation.
//
// The engine is std::mt19937_64, whose output sequence is fixed by the C++
// standard. Uniform and Gaussian variates are derived here (53-bit mantissa
// fill and the Marsaglia polar method) rather than through the
// <random> distributions, whose algorithms are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1).
  double uniform();

  // Standard normal.
  double normal();

  // Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);

  // Derives an independent seed for substream `stream` of `seed`.
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream);

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace stacklab
