#pragma once

#include <cstdint>
#include <random>

namespace tlsan {

// Seeded RNG with portable draw semantics. std::*_distribution is
// implementation-defined, so uniform() and below() are spelled out here to
// keep outputs byte-identical across standard libraries.
class Rng {
public:
    explicit Rng(uint64_t seed) : eng_(seed) {}

    uint64_t next_u64() { return eng_(); }

    // uniform in [0, 1)
    double uniform() {
        return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
    }

    // uniform in [lo, hi)
    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform();
    }

    // uniform integer in [0, n), n > 0
    uint64_t below(uint64_t n) {
        // modulo bias is < 2^-40 for any n that fits this artifact
        return eng_() % n;
    }

private:
    std::mt19937_64 eng_;
};

}  // namespace tlsan
