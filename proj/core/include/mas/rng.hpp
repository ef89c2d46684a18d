#pragma once

#include <cstdint>

namespace mas {

/// Counter-based 64-bit generator. Output i is a bijective mix of
/// (key, i), so a stream is fully determined by its key and position and
/// child streams can be derived without sharing state.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key = 0, std::uint64_t counter = 0) : key_(key), counter_(counter) {}

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Unbiased integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  /// Standard normal (Box-Muller, one value per call).
  double normal();
  bool bernoulli(double p) { return uniform() < p; }

  /// Independent stream keyed by this stream's key and `stream_id`.
  CounterRng fork(std::uint64_t stream_id) const;

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_;
};

std::uint64_t mix64(std::uint64_t x);

}  // namespace mas
