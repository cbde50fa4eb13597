#pragma once

#include <cstdint>
#include <random>

namespace trajtrack {

/// SplitMix64 finalizer; used to derive independent seeds.
std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// Seed for the `index`-th independent stream under `seed`.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) noexcept;

/// Seeded source of uniform and standard-normal draws.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return uniform_(engine_); }  // [0, 1)
  double normal() { return normal_(engine_); }
  std::mt19937_64& engine() noexcept { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace trajtrack
