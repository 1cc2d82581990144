#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace edcforge {

// splitmix64; used to derive independent seed streams from one root seed.
std::uint64_t mix64(std::uint64_t x);

// Hash a (base, a, b) triple into one seed, e.g. per-epoch per-row dropout
// streams. Chained mixing keeps distinct triples distinct in practice.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b);

// Deterministic RNG wrapper. std::mt19937_64 output is fully specified, and
// the mappings below avoid std::*_distribution so that every draw is
// reproducible independent of the standard library implementation.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(mix64(seed)) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform01() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Uniform integer in [0, n). Rejection-free modulo bias is negligible for
    // the small n used here, but do it properly anyway.
    std::uint64_t below(std::uint64_t n);

    bool bernoulli(double p) { return uniform01() < p; }

    // Fisher-Yates; self-contained so shuffles are identical across platforms.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 engine_;
};

// Fixed tags for deriving per-purpose streams from a dataset/train seed.
namespace rng_tag {
inline constexpr std::uint64_t sampler = 0x726f6f6d73ULL;
inline constexpr std::uint64_t split = 0x73706c6974ULL;
inline constexpr std::uint64_t init = 0x696e6974ULL;
inline constexpr std::uint64_t train = 0x747261696eULL;
inline constexpr std::uint64_t dropout = 0x64726f70ULL;
} // namespace rng_tag

} // namespace edcforge
