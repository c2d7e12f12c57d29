#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>

namespace tomtalker {

/// Seeded generator used everywhere randomness enters. Draws are derived from
/// the raw 64-bit engine output so sequences do not depend on the standard
/// library's distribution implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    /// Independent stream for a (seed, key...) tuple, used for common random
    /// numbers across experiment arms.
    static Rng stream(std::uint64_t seed, std::initializer_list<std::uint64_t> keys);

    std::uint64_t next() { return engine_(); }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). `n` must be positive.
    std::uint64_t below(std::uint64_t n);

    bool bernoulli(double p) { return uniform() < p; }

    /// Index drawn proportionally to non-negative `weights` (not necessarily
    /// normalized). Returns weights.size() when the total is zero.
    std::size_t categorical(std::span<const double> weights);

    /// Standard normal via Box-Muller.
    double normal();

private:
    std::mt19937_64 engine_;
};

} // namespace tomtalker
