#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace milora {

uint64_t fnv1a64(std::string_view s);
uint64_t fnv1a64(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ull);

// Deterministic random stream.  mt19937_64 output is fully specified by the
// standard; the value transforms below are hand-rolled so that results never
// depend on the standard library's distribution implementations.  Streams for
// unrelated purposes are derived from (seed, substream-name) pairs, which
// keeps draws independent of the order in which other components initialize.
class RngStream {
 public:
  explicit RngStream(uint64_t seed) : gen_(seed) {}
  RngStream(uint64_t seed, std::string_view substream)
      : gen_(seed ^ fnv1a64(substream)) {}

  uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  // Standard normal via the Marsaglia polar method.
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Uniform integer in [lo, hi], both inclusive.
  int uniform_int(int lo, int hi);

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace milora
