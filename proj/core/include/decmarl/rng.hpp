#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>

namespace decmarl {

std::uint64_t splitmix64(std::uint64_t x);

// Seeded random source. The engine output is fixed by the standard; the
// distribution helpers are hand-written so draws are bit-identical across
// standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(splitmix64(seed)), seed_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next() { return engine_(); }

  // Uniform on [0, 1) with 53 bits of precision.
  double uniform();
  // Uniform integer in [0, n). n must be positive.
  std::size_t uniform_index(std::size_t n);
  bool bernoulli(double p);
  // Index drawn proportionally to `weights` (need not be normalized).
  std::size_t categorical(std::span<const double> weights);
  double exponential();

  // Child generator for an independent component. Depends only on this
  // generator's seed and `stream`, not on how many draws have been made.
  Rng fork(std::uint64_t stream) const;

 private:
  std::mt19937_64 engine_;
  std::uint64_t seed_;
};

// Named streams for the hierarchical split of a run's seed.
namespace streams {
inline constexpr std::uint64_t kEnvironment = 1;
inline constexpr std::uint64_t kModelFit = 2;
inline constexpr std::uint64_t kAgentTraining = 3;
inline constexpr std::uint64_t kExploration = 4;
inline constexpr std::uint64_t kCollection = 5;
inline constexpr std::uint64_t kEvaluation = 6;
inline constexpr std::uint64_t kPlanning = 7;
inline constexpr std::uint64_t kInstances = 8;
}  // namespace streams

}  // namespace decmarl
