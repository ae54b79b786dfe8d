#pragma once

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "seqlab/tensor.hpp"

namespace seqlab {

/// Named substreams of the single run seed. Consuming one stream never
/// advances another, so data generation, weight init and epoch shuffling
/// stay reproducible independently.
enum class RngStream : std::uint32_t {
    data_train = 1,
    data_val = 2,
    data_test = 3,
    weight_init = 4,
    shuffle = 5,
    misc = 6,
};

/// Deterministic seeded generator. Identical (seed, stream, call sequence)
/// always yields identical outputs; bounded draws use rejection sampling so
/// the mapping from raw engine output is platform-independent.
class SeededRng {
public:
    SeededRng(std::uint64_t seed, std::uint32_t stream = 0)
        : seed_(seed), stream_(stream), state_(mix(seed, stream)) {
        // splitmix64 must not start at 0; mix() already avoids that.
    }

    SeededRng(std::uint64_t seed, RngStream stream)
        : SeededRng(seed, static_cast<std::uint32_t>(stream)) {}

    std::uint64_t seed() const { return seed_; }
    std::uint32_t stream() const { return stream_; }

    std::uint64_t next_u64() {
        // splitmix64 (Steele, Lea, Flood 2014); full-period, trivially
        // seedable per stream.
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Uniform integer in [lo, hi], both inclusive.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        if (lo > hi) throw std::invalid_argument("uniform_int: lo > hi");
        const std::uint64_t range = static_cast<std::uint64_t>(hi - lo) + 1;
        if (range == 0) return static_cast<std::int64_t>(next_u64());  // full 64-bit range
        const std::uint64_t limit =
            std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % range;
        std::uint64_t draw;
        do {
            draw = next_u64();
        } while (draw >= limit);
        return lo + static_cast<std::int64_t>(draw % range);
    }

    /// Uniform double in [0, 1) with 53 random mantissa bits.
    double uniform_real01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform double in [-b, b).
    double uniform_symmetric(double b) { return (2.0 * uniform_real01() - 1.0) * b; }

private:
    static std::uint64_t mix(std::uint64_t seed, std::uint32_t stream) {
        std::uint64_t z = seed ^ (0xD2B74407B1CE6E93ULL * (static_cast<std::uint64_t>(stream) + 1));
        z = (z ^ (z >> 33)) * 0xFF51AFD7ED558CCDULL;
        z = (z ^ (z >> 33)) * 0xC4CEB9FE1A85EC53ULL;
        return z ^ (z >> 33);
    }

    std::uint64_t seed_;
    std::uint32_t stream_;
    std::uint64_t state_;
};

/// Glorot-uniform initialization: entries uniform in
/// +-sqrt(6 / (fan_in + fan_out)), filled in row-major order.
template <typename S>
Tensor<S> rng_glorot(SeededRng& rng, std::size_t fan_in, std::size_t fan_out,
                     std::vector<std::size_t> shape) {
    if (fan_in == 0 || fan_out == 0)
        throw std::invalid_argument("rng_glorot: fans must be positive");
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor<S> t(std::move(shape));
    for (auto& v : t.data) v = static_cast<S>(rng.uniform_symmetric(bound));
    return t;
}

}  // namespace seqlab
