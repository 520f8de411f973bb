#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace diae {

inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// Mixes a seed with stream tags, so independent substreams (noise draws,
// batch selection, init, ...) can be derived from one run seed and replayed
// from any step without storing generator state in checkpoints.
inline uint64_t derive_seed(uint64_t seed, uint64_t tag, uint64_t a = 0, uint64_t b = 0) {
    uint64_t s = seed;
    uint64_t h = splitmix64(s);
    s ^= tag * 0x9e3779b97f4a7c15ull + h;
    h ^= splitmix64(s);
    s ^= a + 0xd1b54a32d192ed03ull * b;
    h ^= splitmix64(s);
    return h;
}

// xoshiro256++ with a Box-Muller normal. Self-contained so every stream is
// bit-reproducible across platforms and standard library versions.
class Rng {
public:
    explicit Rng(uint64_t seed = 0) { reseed(seed); }

    void reseed(uint64_t seed) {
        uint64_t sm = seed;
        for (auto& w : s_) w = splitmix64(sm);
        has_spare_ = false;
        spare_ = 0.0;
    }

    uint64_t next_u64() {
        const uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
        const uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // uniform in [0,1), 53-bit resolution
    double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n)
    uint64_t below(uint64_t n) {
        // rejection to keep the distribution exact
        const uint64_t lim = UINT64_MAX - UINT64_MAX % n;
        uint64_t v = next_u64();
        while (v >= lim) v = next_u64();
        return v % n;
    }

    // integer in [lo, hi] inclusive
    int64_t range(int64_t lo, int64_t hi) {
        return lo + int64_t(below(uint64_t(hi - lo + 1)));
    }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    template <class T>
    void fill_normal(T* dst, size_t n) {
        for (size_t i = 0; i < n; ++i) dst[i] = T(normal());
    }

private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    uint64_t s_[4] = {};
    bool has_spare_ = false;
    double spare_ = 0.0;
};

} // namespace diae
