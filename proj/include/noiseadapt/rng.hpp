#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace noiseadapt {

// Seeded random source. Only the engine comes from <random>; every
// distribution is implemented here so draws do not depend on the standard
// library vendor.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t seed() const { return seed_; }
    // Number of raw 64-bit words consumed so far.
    std::uint64_t position() const { return position_; }

    std::uint64_t next_u64();
    // Uniform in [0, 1) with 53 random bits.
    double uniform();
    double uniform(double lo, double hi);
    // Uniform integer in [0, n). Rejection sampling, no modulo bias.
    std::size_t uniform_index(std::size_t n);
    double normal();

    // Child generator whose seed is a deterministic function of this seed and `stream`.
    // Does not advance this generator.
    Rng fork(std::uint64_t stream) const;

    template <typename T>
    void shuffle(std::span<T> items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::swap(items[i - 1], items[uniform_index(i)]);
        }
    }

private:
    std::uint64_t seed_;
    std::uint64_t position_ = 0;
    std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

// Draws index i with probability p[i]. Throws std::invalid_argument if p is
// not on the probability simplex within 1e-9.
std::size_t categorical_sample(std::span<const double> p, Rng& rng);

}  // namespace noiseadapt
