#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <string_view>

namespace rl4seg {

inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline uint64_t hash_combine64(uint64_t h, uint64_t x) {
    uint64_t s = h ^ (x + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2));
    return splitmix64(s);
}

inline uint64_t hash64_str(std::string_view s) {
    // FNV-1a
    uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) {
        h ^= static_cast<uint8_t>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Seed stream derivation used by every stochastic consumer. Streams are
// identified by (module tag, iteration, index) so that per-sample work can
// run in any order and still reproduce bit-identically.
inline uint64_t derive_seed(uint64_t master, std::string_view module_tag,
                            uint64_t iteration = 0, uint64_t index = 0) {
    uint64_t h = hash_combine64(master, hash64_str(module_tag));
    h = hash_combine64(h, iteration);
    h = hash_combine64(h, index);
    return h;
}

// Small deterministic generator (splitmix64 core). Distribution code is
// hand-rolled so streams do not depend on the standard library
// implementation.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() { return splitmix64(state_); }

    // uniform in [0, 1)
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n)
    uint64_t uniform_int(uint64_t n) { return next_u64() % n; }

    // standard normal, Box-Muller (second value discarded to keep the
    // stream position a pure function of the call count)
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

private:
    uint64_t state_;
};

// closed numeric interval with uniform sampling
struct Range {
    double lo = 0, hi = 0;

    double mid() const { return 0.5 * (lo + hi); }
    double sample(Rng& rng) const { return rng.uniform(lo, hi); }
    bool degenerate() const { return !(lo <= hi); }
};

}  // namespace rl4seg
