#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace paramshift {

/// xoshiro256** generator seeded through splitmix64.
///
/// Streams are a pure function of (seed, call sequence). Normal deviates use
/// the Box-Muller transform; both values of each pair are consumed in order.
///
/// Stream splitting: `Rng::derive(root, label)` seeds a child generator with
/// splitmix64(root ^ fnv1a64(label)), and `derive(root, index)` with
/// splitmix64(root ^ splitmix64(index + 0x5851f42d4c957f2d)). A new pipeline
/// stage therefore never shifts the stream of an existing one.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  static Rng derive(std::uint64_t root, std::string_view label);
  static Rng derive(std::uint64_t root, std::uint64_t index);
  static std::uint64_t derive_seed(std::uint64_t root, std::string_view label);
  static std::uint64_t derive_seed(std::uint64_t root, std::uint64_t index);

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  double normal();
  std::vector<double> normal_vector(std::size_t n);

  std::uint64_t seed() const { return seed_; }
  /// Number of 64-bit words drawn so far.
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
  std::uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace paramshift
