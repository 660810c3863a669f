#ifndef TCSC_RNG_HPP
#define TCSC_RNG_HPP

#include <cstdint>

namespace tcsc {

// Deterministic, platform-independent generator (SplitMix64 core).
// std::uniform_*_distribution is implementation-defined across standard
// libraries, so all sampling helpers live here.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n), n > 0
    std::uint64_t below(std::uint64_t n) {
        return static_cast<std::uint64_t>((static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Independent child stream; parent advances by one draw. Used to make
    // per-tree / per-sample work order-independent.
    Rng split(std::uint64_t tag) {
        std::uint64_t z = next_u64() ^ (tag * 0xD6E8FEB86659FD93ULL);
        z = (z ^ (z >> 32)) * 0xD6E8FEB86659FD93ULL;
        return Rng(z ^ (z >> 32));
    }

private:
    std::uint64_t state_;
};

} // namespace tcsc

#endif
