#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "gpp/common.hpp"

namespace gpp {

// xoshiro256** seeded through splitmix64. Self-contained so that seeded
// runs produce identical streams on every platform and toolchain; the
// standard <random> distributions are implementation-defined and would
// break the byte-exact reproducibility contract.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) {
        std::uint64_t x = seed;
        for (auto& word : state_) word = splitmix64(x);
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform double in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [lo, hi], inclusive. Rejection sampling keeps the
    // draw unbiased.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
        if (span == 0) return static_cast<std::int64_t>(next_u64());  // full 64-bit range
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
        std::uint64_t v = next_u64();
        while (v >= limit) v = next_u64();
        return lo + static_cast<std::int64_t>(v % span);
    }

    // Box-Muller with cached spare.
    double gaussian(double mu = 0.0, double sigma = 1.0) {
        if (has_spare_) {
            has_spare_ = false;
            return mu + sigma * spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double theta = 6.28318530717958647692 * u2;
        spare_ = radius * std::sin(theta);
        has_spare_ = true;
        return mu + sigma * radius * std::cos(theta);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(i) - 1));
            std::swap(v[i - 1], v[j]);
        }
    }

    // Draws `count` distinct integers from [lo, hi], ascending.
    std::vector<int> sample_sorted(int lo, int hi, int count) {
        const int span = hi - lo + 1;
        if (count > span) throw std::invalid_argument("sample_sorted: count exceeds range");
        std::vector<int> pool(static_cast<std::size_t>(span));
        for (int i = 0; i < span; ++i) pool[static_cast<std::size_t>(i)] = lo + i;
        for (int i = 0; i < count; ++i) {
            const auto j = static_cast<std::size_t>(uniform_int(i, span - 1));
            std::swap(pool[static_cast<std::size_t>(i)], pool[j]);
        }
        pool.resize(static_cast<std::size_t>(count));
        std::sort(pool.begin(), pool.end());
        return pool;
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    static std::uint64_t splitmix64(std::uint64_t& x) {
        x += 0x9e3779b97f4a7c15ull;
        std::uint64_t z = x;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    std::uint64_t state_[4] = {};
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// Per-op RNG streams are derived by hashing the parent seed with a label
// (volume id, op name, fold index, ...), so parallel consumers never share
// stream state.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view label) {
    std::uint64_t h = kFnvOffset;
    for (int i = 0; i < 8; ++i) {
        h ^= (seed >> (8 * i)) & 0xff;
        h *= kFnvPrime;
    }
    return fnv1a64(label, h);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view label, std::int64_t index) {
    std::uint64_t h = derive_seed(seed, label);
    for (int i = 0; i < 8; ++i) {
        h ^= (static_cast<std::uint64_t>(index) >> (8 * i)) & 0xff;
        h *= kFnvPrime;
    }
    return h;
}

}  // namespace gpp
