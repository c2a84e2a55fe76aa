#pragma once

#include <cstdint>

namespace hybridct {

// Counter-based stream built on the splitmix64 finalizer. Streams are keyed
// by up to four 64-bit values, so any (seed, scenario, replicate, role)
// combination gets an independent sequence regardless of evaluation order.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : state_(seed) {}

  static RngStream keyed(std::uint64_t seed, std::uint64_t k1 = 0,
                         std::uint64_t k2 = 0, std::uint64_t k3 = 0);

  std::uint64_t next_u64();

  // Uniform on (0,1); never returns 0 or 1.
  double next_double();

  // Standard normal via Box-Muller; consecutive calls consume pairs.
  double next_normal();

  // Binomial(n, p) by Bernoulli summation (exact, adequate for n <= a few
  // thousand as used here).
  int next_binomial(int n, double p);

  // Uniform integer in {0, ..., k-1}.
  int next_index(int k);

  static std::uint64_t mix(std::uint64_t z);

 private:
  std::uint64_t state_;
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

// FNV-1a hash of a string, used to derive stable scenario stream keys.
std::uint64_t fnv1a64(const char* data, std::size_t len);

}  // namespace hybridct
