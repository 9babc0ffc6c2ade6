#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace ecorr {

struct Seed {
    std::uint64_t master = 0;
};

/// SplitMix64 finalizer. Bijective on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// Per-draw stream derivation: stream_i = mix64(master ^ mix64(i)).
/// Draw i never depends on how many draws precede it, so parallel batches
/// are order-independent.
constexpr std::uint64_t stream_seed(std::uint64_t master, std::uint64_t index) {
    return mix64(master ^ mix64(index));
}

inline Seed derive(Seed s, std::uint64_t index) { return Seed{stream_seed(s.master, index)}; }

/// xoshiro256** with all distributions implemented locally so that
/// sequences do not depend on the standard library vendor.
class Rng {
public:
    explicit Rng(Seed seed);
    explicit Rng(std::uint64_t seed) : Rng(Seed{seed}) {}

    std::uint64_t next_u64();
    /// Uniform on [0, 1) with 53 bits.
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Uniform integer in [0, n).
    std::uint64_t index(std::uint64_t n);
    double normal();
    double normal(double mean, double sd) { return mean + sd * normal(); }
    double gamma(double shape);
    double beta(double a, double b);
    /// Uniform direction on the unit sphere in R^k.
    std::vector<double> unit_vector(std::size_t k);

private:
    std::array<std::uint64_t, 4> s_{};
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace ecorr
