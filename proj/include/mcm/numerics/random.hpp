#pragma once

#include <cstdint>
#include <random>

#include "mcm/numerics/tensor.hpp"

namespace mcm {

// Seeded generator with distribution code kept in-house so sequences are
// identical across standard library implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }
  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n).
  int64_t below(int64_t n);
  double normal();

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Mixes a base seed with a stream index into an independent seed.
uint64_t derive_seed(uint64_t base, uint64_t stream);

Tensor random_uniform(const Shape& shape, double lo, double hi, Rng& rng);

}  // namespace mcm

namespace mcm {

// He-uniform: U(-sqrt(6 / fan_in), sqrt(6 / fan_in)).
Tensor he_uniform(const Shape& shape, int64_t fan_in, Rng& rng);

}  // namespace mcm
