#include "hybridct/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace hybridct {

std::uint64_t RngStream::mix(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

RngStream RngStream::keyed(std::uint64_t seed, std::uint64_t k1,
                           std::uint64_t k2, std::uint64_t k3) {
  std::uint64_t s = mix(seed);
  s = mix(s ^ k1);
  s = mix(s ^ k2);
  s = mix(s ^ k3);
  return RngStream(s);
}

std::uint64_t RngStream::next_u64() {
  state_ += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = state_;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double RngStream::next_double() {
  // 53 random bits, shifted into (0,1).
  return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double RngStream::next_normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_normal_;
  }
  const double u1 = next_double();
  const double u2 = next_double();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * 3.14159265358979323846 * u2;
  spare_normal_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

int RngStream::next_binomial(int n, double p) {
  if (n < 0 || !(p >= 0.0 && p <= 1.0)) {
    throw std::invalid_argument("next_binomial: invalid n or p");
  }
  int count = 0;
  for (int i = 0; i < n; ++i) {
    if (next_double() < p) ++count;
  }
  return count;
}

int RngStream::next_index(int k) {
  if (k <= 0) throw std::invalid_argument("next_index: k must be positive");
  const int idx = static_cast<int>(next_double() * k);
  return idx >= k ? k - 1 : idx;
}

std::uint64_t fnv1a64(const char* data, std::size_t len) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 0x100000001B3ULL;
  }
  return h;
}

}  // namespace hybridct
