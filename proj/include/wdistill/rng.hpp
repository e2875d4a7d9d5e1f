#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace wdistill {

// Philox4x32-10 block function (Salmon et al., "Parallel random numbers: as
// easy as 1, 2, 3"). Maps a 128-bit counter and a 64-bit key to 128 bits.
std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> counter,
                                           std::array<std::uint32_t, 2> key);

// splitmix64 finalizer; used to derive independent keys from (seed, tag).
std::uint64_t mix64(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag);

// Named stream families. Every random quantity in the library is drawn from
// (seed, purpose, index) so that disjoint index ranges can be generated in any
// order or concurrently with identical results.
enum class Purpose : std::uint64_t {
  features = 1,
  corruption = 2,
  sgd_sample = 3,
  shuffle = 4,
  cluster_means = 5,
  cluster_assign = 6,
  sphere_setup = 7,
  trial = 8,
  monte_carlo = 9,
  test_data = 10,
};

// Counter-based generator for a single (key, stream) pair. Satisfies
// std::uniform_random_bit_generator.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  CounterRng(std::uint64_t key, std::uint64_t stream) noexcept : key_(key), stream_(stream) {}

  static CounterRng for_index(std::uint64_t seed, Purpose purpose, std::uint64_t index) noexcept {
    return CounterRng(derive_seed(seed, static_cast<std::uint64_t>(purpose)), index);
  }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept;

  // Uniform on the open interval (0, 1), 53-bit resolution.
  double uniform() noexcept;
  // Standard normal via Box-Muller (one output per two uniforms).
  double normal() noexcept;
  // Uniform integer in [0, n); n > 0.
  std::uint64_t below(std::uint64_t n) noexcept;
  bool bernoulli(double p) noexcept { return uniform() < p; }

 private:
  std::uint64_t key_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
  std::uint64_t spare_ = 0;
  bool has_spare_ = false;
};

}  // namespace wdistill
