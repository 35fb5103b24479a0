#pragma once

#include <array>
#include <cstdint>

#include "lka/tensor.hpp"

namespace lka {

/// xoshiro256++ with splitmix64 seeding. Pure 64-bit integer arithmetic plus
/// one IEEE multiply for doubles, so identical seeds give byte-identical
/// streams on every platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64();
    /// Uniform double in [0, 1), 53 random mantissa bits, one u64 consumed.
    double next_double();
    /// Uniform double in [lo, hi); throws if lo >= hi.
    double uniform(double lo, double hi);
    /// Standard normal via Box-Muller; always consumes exactly two u64.
    double normal();
    bool bernoulli(double p) { return next_double() < p; }

    /// Child stream for per-sample parallelism: derived from one parent draw
    /// mixed with the stream id, so distinct ids give unrelated streams.
    Rng split(std::uint64_t stream_id);

    std::uint64_t seed() const { return seed_; }
    const std::array<std::uint64_t, 4>& state() const { return state_; }

private:
    std::uint64_t seed_ = 0;
    std::array<std::uint64_t, 4> state_{};
};

Tensor uniform(Rng& rng, double lo, double hi, Shape shape, DType dtype = DType::F32);
Tensor normal(Rng& rng, double mean, double stddev, Shape shape, DType dtype = DType::F32);

} // namespace lka
