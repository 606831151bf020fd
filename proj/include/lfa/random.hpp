#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace lfa {

/// splitmix64 output function; used as the mixing step for seed derivation.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Stream ids for SeedFanout::derive. Each randomized phase of an experiment
/// draws from its own stream, so toggling one phase (say, swapping the
/// pre-trainer) never perturbs another phase's randomness.
enum SeedStream : std::uint64_t {
    seed_stream_split = 1,
    seed_stream_init = 2,
    seed_stream_epoch = 3,
    seed_stream_pass = 4,
    seed_stream_row_group = 5,
    seed_stream_col_group = 6,
};

/// Deterministic fan-out of one master seed into per-phase seeds.
struct SeedFanout {
    std::uint64_t master = 0;

    std::uint64_t derive(std::uint64_t stream, std::uint64_t a = 0,
                         std::uint64_t b = 0) const {
        std::uint64_t x = mix64(master ^ mix64(stream));
        x = mix64(x ^ mix64(a));
        return mix64(x ^ mix64(b));
    }
};

/// mt19937_64 plus draw helpers that bypass the std distributions.
/// The engine's sequence is pinned by the standard; the std distributions are
/// not, so all draws here are built directly from engine output and the same
/// seed reproduces the same stream on every platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    /// uniform double in [0, 1)
    double uniform() { return double(engine_() >> 11) * 0x1.0p-53; }

    /// uniform double in [lo, hi)
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// uniform integer in [0, n); n must be >= 1
    std::size_t below(std::size_t n) {
        const std::uint64_t lim = UINT64_MAX - UINT64_MAX % std::uint64_t(n);
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= lim);
        return std::size_t(x % std::uint64_t(n));
    }

    /// standard normal via Box-Muller; consumes two uniform draws per call
    double normal() {
        const double u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log1p(-u1)) *
               std::cos(2.0 * 3.14159265358979323846 * u2);
    }

private:
    std::mt19937_64 engine_;
};

/// Fisher-Yates shuffle driven by Rng::below. std::shuffle's draw pattern is
/// implementation-defined; this one is reproducible.
template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::swap(v[i - 1], v[rng.below(i)]);
    }
}

}  // namespace lfa
