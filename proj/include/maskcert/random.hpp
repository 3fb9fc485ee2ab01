#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace maskcert {

// mt19937_64 with distribution code owned here rather than taken from
// <random>, whose distributions are implementation-defined. Streams are
// therefore identical across standard libraries for a given seed sequence.
class Rng {
 public:
  explicit Rng(std::initializer_list<std::uint64_t> seeds);

  std::uint64_t next() { return engine_(); }
  // [0, 1) with 24 bits of resolution.
  float uniform() { return static_cast<float>(next() >> 40) * 0x1.0p-24f; }
  // [0, bound), bound >= 1, unbiased.
  std::uint64_t below(std::uint64_t bound);
  // Standard normal (Box-Muller, one value per call).
  double normal();
  // Normal with stddev `scale`, resampled until within two stddevs.
  float truncated_normal(float scale);

 private:
  std::mt19937_64 engine_;
};

// FNV-1a, used to derive per-name substreams.
std::uint64_t fnv1a(std::string_view text);

}  // namespace maskcert
