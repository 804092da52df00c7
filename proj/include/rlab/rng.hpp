// Deterministic, serializable random source (xoshiro256** with splitmix64
// seeding). std::mt19937 is avoided on purpose: checkpoint resume needs the
// whole generator state to round-trip bit-exactly, and distribution results
// must not depend on the standard library implementation.
#pragma once

#include <array>
#include <cstdint>
#include <string_view>

#include "rlab/common.hpp"

namespace rlab {

inline std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t hash_str64(std::string_view s) {
    // FNV-1a; its upper bits avalanche poorly on short inputs, so finish
    // with a splitmix-style mix before anyone consumes high bits
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    h ^= h >> 30;
    h *= 0xbf58476d1ce4e5b9ULL;
    h ^= h >> 27;
    h *= 0x94d049bb133111ebULL;
    h ^= h >> 31;
    return h;
}

class Rng {
  public:
    Rng() : Rng(0) {}
    explicit Rng(std::uint64_t seed) {
        std::uint64_t x = seed;
        for (auto& w : s_) w = splitmix64(x);
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // uniform in [0, 1), 53-bit resolution
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // unbiased integer in [0, n)
    std::uint64_t uniform_int(std::uint64_t n) {
        if (n == 0) throw ContractError("uniform_int: n must be positive");
        const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
        std::uint64_t r;
        do {
            r = next_u64();
        } while (r >= limit);
        return r % n;
    }

    // standard normal via Box-Muller; no cached spare, so the state stays
    // exactly two uniforms per draw (simpler to checkpoint)
    double normal() {
        double u1 = 1.0 - uniform();  // (0, 1]
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    bool bernoulli(double p) { return uniform() < p; }

    std::array<std::uint64_t, 4> state() const { return s_; }
    void set_state(const std::array<std::uint64_t, 4>& s) { s_ = s; }

  private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
    std::array<std::uint64_t, 4> s_{};
};

// Named substream derivation: children of one seed never collide as long as
// their labels differ, and adding a new stream does not disturb existing ones.
inline Rng derive_rng(std::uint64_t seed, std::string_view label) {
    std::uint64_t x = seed ^ hash_str64(label);
    splitmix64(x);  // decorrelate from the raw xor
    return Rng(x);
}

inline Rng derive_rng(std::uint64_t seed, std::string_view label, std::uint64_t index) {
    std::uint64_t x = seed ^ hash_str64(label);
    x ^= 0x9e3779b97f4a7c15ULL * (index + 1);
    splitmix64(x);
    return Rng(x);
}

}  // namespace rlab
