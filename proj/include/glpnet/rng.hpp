#pragma once

#include <cmath>
#include <cstdint>

namespace glpnet {

// splitmix64 generator. Deterministic across platforms and compilers, which
// the <random> distributions are not; every random draw in the project goes
// through this so that (seed, config) pins results exactly.
struct Rng {
    std::uint64_t state;

    explicit Rng(std::uint64_t seed = 0x9e3779b97f4a7c15ull) : state(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * (1.0 / 9007199254740992.0); }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n)
    std::int64_t uniform_int(std::int64_t n) {
        return n <= 1 ? 0 : static_cast<std::int64_t>(next_u64() % static_cast<std::uint64_t>(n));
    }

    bool bernoulli(double p) { return uniform() < p; }

    double normal(double mean = 0.0, double stddev = 1.0) {
        // Box-Muller; two fresh draws per call so the stream stays replayable
        double u1 = uniform();
        while (u1 <= 1e-300) u1 = uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        return mean + stddev * r * std::cos(6.283185307179586 * u2);
    }

    // order-sensitive combine for derived seeds, e.g. (seed, epoch, index)
    static std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
        Rng r(a * 0x9e3779b97f4a7c15ull + b + 0x632be59bd9b4e019ull);
        return r.next_u64();
    }
    static std::uint64_t mix(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
        return mix(mix(a, b), c);
    }
};

}  // namespace glpnet
