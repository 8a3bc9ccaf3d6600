#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

#include "magspike/errors.hpp"

// Reproducible random streams. The generator family is fixed so that any
// implementation can regenerate identical streams from the same seeds:
//
//   stream seed  : derive_seed(master, tag, index) -- FNV-1a over the tag,
//                  golden-ratio increment per index, SplitMix64 finalizer
//   state init   : four SplitMix64 outputs seed xoshiro256++
//   uniform      : top 53 bits of xoshiro256++ output, in [0, 1)
//   gaussian     : Box-Muller, exactly two uniforms per draw (no caching)
//   exponential  : inverse CDF, exactly one uniform per draw
namespace magspike::rng {

inline constexpr std::uint64_t golden_gamma = 0x9E3779B97F4A7C15ull;

inline constexpr std::uint64_t splitmix64_finalize(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

inline constexpr std::uint64_t splitmix64_next(std::uint64_t& state) {
    state += golden_gamma;
    return splitmix64_finalize(state);
}

inline constexpr std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ull;
    }
    return h;
}

// Per-purpose stream seeds: distinct tags and indices give decorrelated
// streams under one master seed.
inline constexpr std::uint64_t derive_seed(std::uint64_t master, std::string_view tag,
                                           std::uint64_t index = 0) {
    std::uint64_t x = master ^ fnv1a64(tag);
    x += golden_gamma * (index + 1);
    return splitmix64_finalize(x);
}

class Xoshiro256pp {
  public:
    explicit constexpr Xoshiro256pp(std::uint64_t seed) {
        std::uint64_t sm = seed;
        for (auto& word : state_) word = splitmix64_next(sm);
        if ((state_[0] | state_[1] | state_[2] | state_[3]) == 0) state_[0] = golden_gamma;
    }

    constexpr std::uint64_t next() {
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

  private:
    static constexpr std::uint64_t rotl(std::uint64_t v, int k) {
        return (v << k) | (v >> (64 - k));
    }
    std::uint64_t state_[4] = {};
};

class RandomStream {
  public:
    explicit RandomStream(std::uint64_t seed) : gen_(seed) {}

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(gen_.next() >> 11) * 0x1.0p-53; }

    // Standard normal via Box-Muller. Consumes exactly two uniforms.
    double gaussian() {
        const double u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log1p(-u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    // Standard normal via the Marsaglia polar method with one cached spare;
    // roughly 3x faster than gaussian() and used in integrator hot loops.
    // Deterministic for a fixed stream, but interleaving normal() and other
    // draws changes the uniform consumption pattern.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double f = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * f;
        have_spare_ = true;
        return u * f;
    }

    // Exponential with the given mean. Consumes exactly one uniform.
    double exponential(double mean) {
        if (!(mean > 0.0)) throw InvalidInput("exponential: mean must be positive");
        return -mean * std::log1p(-uniform());
    }

    std::uint64_t next_u64() { return gen_.next(); }

  private:
    Xoshiro256pp gen_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

} // namespace magspike::rng
