#include "lka/rng.hpp"

#include <cmath>
#include <numbers>

namespace lka {

namespace {

inline std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

inline std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

} // namespace

Rng::Rng(std::uint64_t seed) : seed_(seed) {
    std::uint64_t sm = seed;
    for (auto& w : state_) w = splitmix64(sm);
}

std::uint64_t Rng::next_u64() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
}

double Rng::next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::uniform(double lo, double hi) {
    if (!(lo < hi)) throw std::invalid_argument("uniform: require lo < hi");
    return lo + (hi - lo) * next_double();
}

double Rng::normal() {
    // u1 in (0, 1] keeps the log finite.
    const double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    const double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Rng Rng::split(std::uint64_t stream_id) {
    const std::uint64_t draw = next_u64();
    return Rng(draw ^ (0x9E3779B97F4A7C15ULL * (stream_id + 1)));
}

Tensor uniform(Rng& rng, double lo, double hi, Shape shape, DType dtype) {
    if (!(lo < hi)) throw std::invalid_argument("uniform: require lo < hi");
    if (!is_float_dtype(dtype)) throw std::invalid_argument("uniform: float dtype required");
    Tensor t = Tensor::zeros(std::move(shape), dtype);
    if (dtype == DType::F32) {
        auto out = t.f32();
        for (auto& v : out) v = static_cast<float>(lo + (hi - lo) * rng.next_double());
    } else {
        auto out = t.f64();
        for (auto& v : out) v = lo + (hi - lo) * rng.next_double();
    }
    return t;
}

Tensor normal(Rng& rng, double mean, double stddev, Shape shape, DType dtype) {
    if (!is_float_dtype(dtype)) throw std::invalid_argument("normal: float dtype required");
    Tensor t = Tensor::zeros(std::move(shape), dtype);
    for (std::int64_t i = 0; i < t.numel(); ++i) t.set(i, mean + stddev * rng.normal());
    return t;
}

} // namespace lka
