#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>
#include <vector>

namespace latte {

/// SplitMix64 finalizer; used to derive independent stream seeds.
std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// Combines several integers into one well-mixed seed.
std::uint64_t mix_seed(std::initializer_list<std::uint64_t> parts) noexcept;

/// Derives the seed of a named stream ("mask", "cluster", ...) from a base seed.
std::uint64_t stream_seed(std::uint64_t base, std::string_view purpose) noexcept;

/// Deterministic random source. Distributions are implemented here rather
/// than through <random> so draws are identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform on [0, 1) with 53 bits of resolution.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  /// Standard normal via Box-Muller.
  double normal();
  /// Uniform integer in [0, n); unbiased.
  std::size_t index(std::size_t n);
  bool bernoulli(double p) { return uniform() < p; }

  template <typename T>
  void shuffle(std::vector<T>& values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      std::size_t j = index(i);
      std::swap(values[i - 1], values[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace latte
