#pragma once

#include <cstdint>

namespace hmjnd {

/// Derive an independent sub-seed from a base seed and a stream index.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

/// Deterministic RNG (splitmix64 core). One instance per run; sub-streams
/// are spawned with derive_seed so results do not depend on call order
/// between independent consumers.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64();
  double uniform01();  // [0, 1)
  double uniform(double lo, double hi);
  double normal(double mean = 0.0, double stddev = 1.0);
  /// Normal(0, stddev) resampled until |z| <= clip standard deviations.
  double truncated_normal(double stddev, double clip = 2.0);
  int sign();  // -1 or +1, equiprobable
  int uniform_int(int lo, int hi);  // inclusive bounds

 private:
  std::uint64_t state_;
  bool has_cached_ = false;
  double cached_ = 0.0;
};

}  // namespace hmjnd
