#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace simtune {

/// xoshiro256** seeded through splitmix64. Every draw is computed here rather
/// than through <random> distributions so streams are identical across
/// standard library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0);

    std::uint64_t seed() const noexcept { return seed_; }

    std::uint64_t next_u64();
    /// Uniform in [0, 1) with 53 random bits.
    double uniform();
    /// Uniform integer in [0, n). n must be > 0.
    std::size_t uniform_index(std::size_t n);
    /// Standard normal (Box-Muller, one cached spare).
    double normal();
    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    /// First `k` entries of a uniformly random permutation of [0, n).
    std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

    /// Independent child stream; does not disturb this stream beyond one draw.
    Rng split();

private:
    std::uint64_t seed_;
    std::uint64_t s_[4];
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace simtune
