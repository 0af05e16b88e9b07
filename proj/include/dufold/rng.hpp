#pragma once

#include <cstdint>

#include "dufold/tensor.hpp"

namespace dufold {

/// Counter-based deterministic generator: draw i is a pure function of
/// (seed, i), so identical (seed, call sequence) replays bit-identically.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : seed_(seed) {}

    std::uint64_t seed() const { return seed_; }
    std::uint64_t counter() const { return counter_; }

    std::uint64_t next_u64();
    /// Uniform in [0, 1) with 53 random bits.
    double uniform();
    /// Standard normal via Box-Muller (two uniforms per draw).
    double normal();
    /// Tensor of i.i.d. standard normals; complex tensors get unit-variance
    /// real and imaginary components.
    Tensor randn(const Shape& shape, bool complex = false);
    /// Integer in [0, n).
    std::uint64_t below(std::uint64_t n);
    /// Derive a seed for an independent child stream.
    std::uint64_t fork_seed() { return next_u64(); }

  private:
    std::uint64_t seed_ = 0;
    std::uint64_t counter_ = 0;
};

}  // namespace dufold
