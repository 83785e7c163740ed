#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace sta {

/// Independent stream seed derived from a master seed; stable across runs.
uint64_t derive_seed(uint64_t master, uint64_t stream);

/// Deterministic RNG: mt19937_64 engine with hand-rolled transforms so draw
/// sequences are pinned by this code rather than by the standard library's
/// distribution implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : eng_(seed), base_seed_(seed) {}

  uint64_t next_u64() { return eng_(); }
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }               // [0,1)
  double uniform_open() { return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53; }  // (0,1)
  double normal();  // Box-Muller
  double laplace(double mu, double scale);
  double gumbel();
  bool bernoulli(double p) { return uniform() < p; }
  int64_t uniform_int(int64_t n);  // [0, n), rejection sampled

  Rng child(uint64_t stream) const { return Rng(derive_seed(base_seed_, stream)); }

  std::string save_state() const;
  void load_state(const std::string& s);

 private:
  std::mt19937_64 eng_;
  uint64_t base_seed_ = 0;
};

}  // namespace sta
