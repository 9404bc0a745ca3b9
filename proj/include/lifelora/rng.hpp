#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace lifelora {

// splitmix64-based generator. std::mt19937_64 would also work, but the
// distributions on top of it are implementation-defined; saved matrices and
// replayed noise streams must not depend on the standard library version.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in the open interval (0,1); never returns exactly 0 or 1.
    double uniform() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * (1.0 / 9007199254740992.0);
    }

    // Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Integer in [0, n).
    std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

    double gumbel() { return -std::log(-std::log(uniform())); }

    double normal() {
        // Box-Muller, one value per call (the mate is discarded to keep the
        // stream position independent of call pairing).
        double u1 = uniform();
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

private:
    std::uint64_t state_;
};

// FNV-1a, used for text digests and hashed n-gram bucketing.
inline std::uint64_t fnv1a(std::string_view s, std::uint64_t seed = 0xcbf29ce484222325ULL) {
    std::uint64_t h = seed;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Derive an independent stream from a base seed and a label.
inline std::uint64_t derive_seed(std::uint64_t base, std::string_view label, std::uint64_t index = 0) {
    std::uint64_t h = fnv1a(label, base ^ 0x9e3779b97f4a7c15ULL);
    h ^= index + 0x165667b19e3779f9ULL + (h << 6) + (h >> 2);
    return h;
}

} // namespace lifelora
