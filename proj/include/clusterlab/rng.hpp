#ifndef CLUSTERLAB_RNG_HPP
#define CLUSTERLAB_RNG_HPP

#include <cmath>
#include <cstdint>

namespace clusterlab {

// Counter-based generator: output i is a bit-mix of (key, i), so a stream is
// fully determined by its key and every draw is reproducible across platforms.
// split() derives an independent child stream; sampling order in one stream
// never disturbs another.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : key_(mix(seed ^ 0xA3C59AC2ULL)) {}

    std::uint64_t next_u64() {
        std::uint64_t z = key_ + (++counter_) * 0x9E3779B97F4A7C15ULL;
        return mix(z);
    }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Unbiased integer in [0, n), rejection sampled.
    std::uint64_t uniform_below(std::uint64_t n) {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = next_u64();
        } while (x >= limit);
        return x % n;
    }

    // Standard normal via Box-Muller; the second value of each pair is cached.
    double gaussian() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = 1.0 - uniform();  // (0, 1]
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double t = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(t);
        has_spare_ = true;
        return r * std::cos(t);
    }

    // Independent child stream; deterministic in (key, stream).
    Rng split(std::uint64_t stream) const {
        Rng child(0);
        child.key_ = mix(key_ ^ mix(stream + 0xD1B54A32D192ED03ULL));
        child.counter_ = 0;
        child.has_spare_ = false;
        return child;
    }

private:
    static std::uint64_t mix(std::uint64_t z) {
        z ^= z >> 30;
        z *= 0xBF58476D1CE4E5B9ULL;
        z ^= z >> 27;
        z *= 0x94D049BB133111EBULL;
        z ^= z >> 31;
        return z;
    }

    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace clusterlab

#endif
