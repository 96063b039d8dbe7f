#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace biner {

#ifdef BINER_REAL64
using real = double;
#else
using real = float;
#endif

// Malformed input data, bad span indices, parse failures.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Tensor shape / dimension disagreements.
struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Checkpoint / cache format problems, fingerprint mismatches.
struct ModelError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid configuration values.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Deterministic RNG. All distributions are mapped from the raw mt19937_64
// stream by hand so that a seed produces the same sequence on every
// platform (the std::*_distribution classes make no such guarantee).
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t next_u64() { return gen_(); }

    // [0, 1)
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // [0, n)
    int uniform_int(int n) {
        return static_cast<int>(gen_() % static_cast<uint64_t>(n));
    }

    bool bernoulli(double p) { return uniform() < p; }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        while (u1 <= 1e-300) u1 = uniform();
        double u2 = uniform();
        double mag = std::sqrt(-2.0 * std::log(u1));
        spare_ = mag * std::sin(2.0 * M_PI * u2);
        has_spare_ = true;
        return mag * std::cos(2.0 * M_PI * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

private:
    std::mt19937_64 gen_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

inline uint64_t fnv1a64(const void* data, size_t n, uint64_t h = 1469598103934665603ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace biner
