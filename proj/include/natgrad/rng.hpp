#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace natgrad {

/// xoshiro256** seeded through splitmix64. Every draw is defined in integer
/// arithmetic plus IEEE double operations, so a seed gives the same stream
/// on every platform (unlike the std:: distributions).
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  /// Child generator for an independent sub-stream, e.g. one per run.
  static Rng derive(std::uint64_t seed, std::uint64_t stream);

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);
  /// Standard normal (Box-Muller, pairs cached).
  double normal();
  bool bernoulli(double p);
  /// Uniform integer in [0, n), unbiased.
  std::size_t below(std::size_t n);
  /// Index drawn with probability proportional to `weights`.
  std::size_t categorical(std::span<const double> weights);
  /// Fisher-Yates permutation of 0..n-1.
  std::vector<std::size_t> permutation(std::size_t n);
  /// `count` distinct indices from 0..n-1 (partial Fisher-Yates).
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t count);

 private:
  std::uint64_t seed_;
  std::uint64_t s_[4];
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace natgrad
