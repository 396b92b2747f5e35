#pragma once

// Deterministic random streams. Every consumer derives its own substream
// from (master seed, owner id, purpose tag) so adding a draw site never
// perturbs the sequences seen by unrelated components.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace canopy {

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ull;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ull;

constexpr std::uint64_t fnv1a(std::string_view s, std::uint64_t h = kFnvOffset) {
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= kFnvPrime;
    }
    return h;
}

constexpr std::uint64_t fnv1a_u64(std::uint64_t v, std::uint64_t h = kFnvOffset) {
    for (int i = 0; i < 8; ++i) {
        h ^= (v >> (8 * i)) & 0xffu;
        h *= kFnvPrime;
    }
    return h;
}

// mt19937_64 is fully specified by the standard, so streams are portable.
// The normal transform is hand-rolled Box-Muller (no cached spare) because
// std::normal_distribution is implementation-defined.
class RandomStream {
public:
    explicit RandomStream(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // uniform in (0,1), never exactly 0 or 1 so log() below is safe
    double uniform01() {
        return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // unbiased integer in [0, n)
    std::uint64_t below(std::uint64_t n) {
        std::uint64_t bound = ~std::uint64_t{0} - ~std::uint64_t{0} % n;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= bound);
        return x % n;
    }

    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {  // inclusive
        return lo + static_cast<std::int64_t>(below(static_cast<std::uint64_t>(hi - lo + 1)));
    }

    double normal(double mean, double stddev) {
        double u1 = uniform01();
        double u2 = uniform01();
        double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
        return mean + stddev * z;
    }

    bool bernoulli(double p) { return uniform01() < p; }

private:
    std::mt19937_64 engine_;
};

// Substream derivation: hash the master seed with the owner/purpose labels.
inline std::uint64_t substream_seed(std::uint64_t master, std::string_view owner,
                                    std::string_view purpose) {
    std::uint64_t h = fnv1a_u64(master);
    h = fnv1a(owner, h);
    h = fnv1a("/", h);
    h = fnv1a(purpose, h);
    // avoid the all-zero seed corner for mt19937_64
    return h ? h : 0x9e3779b97f4a7c15ull;
}

inline RandomStream substream(std::uint64_t master, std::string_view owner,
                              std::string_view purpose) {
    return RandomStream(substream_seed(master, owner, purpose));
}

}  // namespace canopy
