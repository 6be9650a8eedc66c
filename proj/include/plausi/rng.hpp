#pragma once

// Deterministic pseudo-random source. std::mt19937 is portable but the
// std:: distributions are implementation-defined, so everything downstream
// of a seed (doubles, ranges, shuffles) is hand-rolled here to keep outputs
// byte-identical across compilers and standard libraries.

#include <cmath>
#include <cstdint>
#include <string_view>
#include <utility>
#include <vector>

namespace plausi {

// splitmix64 finalizer: bijective 64-bit mix.
inline constexpr std::uint64_t mix64(std::uint64_t x) {
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ull;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebull;
    x ^= x >> 31;
    return x;
}

// Independent substream seed for (seed, tag). Used to give each unit of work
// (a sequence, an epoch, an ablation row) its own stream so that changing how
// many draws one unit makes never perturbs its neighbours.
inline constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
    return mix64(seed ^ mix64(tag ^ 0x6a09e667f3bcc909ull));
}

// Named substream: FNV-1a over the name, then derive as above.
inline constexpr std::uint64_t derive_seed(std::uint64_t seed, std::string_view name) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (char c : name) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ull;
    }
    return derive_seed(seed, h);
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ull;
        return mix64(state_);
    }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). Rejection sampling keeps it unbiased.
    std::uint64_t below(std::uint64_t n) {
        // threshold = 2^64 mod n; values under it would over-represent low residues.
        const std::uint64_t threshold = (0 - n) % n;
        for (;;) {
            std::uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    std::size_t index(std::size_t n) { return static_cast<std::size_t>(below(n)); }

    bool coin(double p_true) { return uniform() < p_true; }

    // Standard normal via Box-Muller (one value per call; the pair's second
    // half is discarded to keep the draw count predictable).
    double normal() {
        constexpr double two_pi = 6.283185307179586476925286766559;
        double u1 = 1.0 - uniform();  // (0, 1]: keeps log() finite
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    Rng fork(std::uint64_t tag) const { return Rng(derive_seed(state_, tag)); }
    Rng fork(std::string_view name) const { return Rng(derive_seed(state_, name)); }

    // Fisher-Yates.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = index(i);
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t state_;
};

}  // namespace plausi
