#pragma once

#include <cstdint>
#include <vector>

namespace odetex {

// Counter-based generator: the stream depends only on (seed, counter), so
// cloning and checkpointing the state is trivial and the same seed gives a
// bit-identical stream on every run.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed), counter_(0) {}

  std::uint64_t next_u64();

  // Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi);

  // Standard normal via Box-Muller (two uniforms per draw, no cached spare).
  double normal();

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  // Fisher-Yates permutation of {0, ..., n-1}.
  std::vector<int> permutation(int n);

  // Uniformly distributed unit vector in R^dim.
  std::vector<float> unit_vector(int dim);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }
  void set_state(std::uint64_t seed, std::uint64_t counter) {
    seed_ = seed;
    counter_ = counter;
  }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_;
};

}  // namespace odetex
