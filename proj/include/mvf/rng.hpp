#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace mvf {

/// Explicit random stream. Every stochastic routine takes one by reference;
/// nothing draws from ambient state.
///
/// Normals use Box-Muller without a cached second value so the full state is
/// the engine state alone.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);
  // Independent stream derived from (seed, stream), e.g. one per training step.
  Rng(std::uint64_t seed, std::uint64_t stream);

  std::uint64_t next_u64() { return engine_(); }
  double uniform();  // [0, 1)
  double normal();
  double logit_normal();  // sigmoid(N(0, 1))
  std::size_t below(std::size_t n);

  std::vector<std::size_t> permutation(std::size_t n);
  // Uniform over permutations with no fixed points; n >= 2.
  std::vector<std::size_t> derangement(std::size_t n);

  std::string state() const;
  void restore(const std::string& state);

 private:
  std::mt19937_64 engine_;
};

double sigmoid(double x);

}  // namespace mvf
