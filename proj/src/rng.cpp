#include "momentnav/rng.hpp"

#include <cmath>
#include <numbers>

namespace momentnav {

std::uint64_t Rng::uniform_int(std::uint64_t n) {
  // Rejection on the top of the range keeps the draw unbiased.
  const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % n);
  std::uint64_t x = next_u64();
  while (x >= limit) x = next_u64();
  return x % n;
}

double Rng::normal() {
  if (has_cached_normal_) {
    has_cached_normal_ = false;
    return cached_normal_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  cached_normal_ = radius * std::sin(angle);
  has_cached_normal_ = true;
  return radius * std::cos(angle);
}

std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) {
  Rng mixer(seed);
  std::uint64_t acc = mixer.next_u64();
  for (const std::uint64_t key : keys) {
    Rng step(acc ^ (key * 0xD1B54A32D192ED03ULL + 0x632BE59BD9B4E019ULL));
    acc = step.next_u64();
  }
  return acc;
}

}  // namespace momentnav
