#include "sta/rng.hpp"

#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace sta {

uint64_t derive_seed(uint64_t master, uint64_t stream) {
  // splitmix64 finalizer over master advanced by the stream index
  uint64_t z = master + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double Rng::normal() {
  const double u1 = uniform_open();
  const double u2 = uniform_open();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double Rng::laplace(double mu, double scale) {
  const double u = uniform_open() - 0.5;  // (-1/2, 1/2)
  const double s = u >= 0.0 ? 1.0 : -1.0;
  return mu - scale * s * std::log(1.0 - 2.0 * std::fabs(u));
}

double Rng::gumbel() { return -std::log(-std::log(uniform_open())); }

int64_t Rng::uniform_int(int64_t n) {
  if (n <= 0) throw std::invalid_argument("uniform_int: n must be positive");
  const uint64_t un = static_cast<uint64_t>(n);
  const uint64_t bound = UINT64_MAX - UINT64_MAX % un;
  uint64_t x;
  do {
    x = next_u64();
  } while (x >= bound);
  return static_cast<int64_t>(x % un);
}

std::string Rng::save_state() const {
  std::ostringstream os;
  os << base_seed_ << ' ' << eng_;
  return os.str();
}

void Rng::load_state(const std::string& s) {
  std::istringstream is(s);
  is >> base_seed_ >> eng_;
  if (!is) throw std::runtime_error("rng: malformed state string");
}

}  // namespace sta
