#include "dufold/rng.hpp"

#include <cmath>

namespace dufold {

std::uint64_t Rng::next_u64() {
    // splitmix64 over a (seed, counter) pair; pure integer pipeline.
    std::uint64_t z = seed_ + (++counter_) * 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

double Rng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
    const double u1 = 1.0 - uniform();  // (0, 1], keeps log finite
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    return r * std::cos(2.0 * M_PI * u2);
}

Tensor Rng::randn(const Shape& shape, bool complex) {
    Tensor t = Tensor::zeros(shape, complex);
    for (std::size_t i = 0; i < t.raw_size(); ++i) t[i] = normal();
    return t;
}

std::uint64_t Rng::below(std::uint64_t n) {
    return n ? next_u64() % n : 0;
}

}  // namespace dufold
