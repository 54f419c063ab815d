#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace auscsed {

/// Seeded random stream with pinned value derivations. The mt19937_64 engine
/// is fully specified by the standard and the conversions below avoid
/// std::*_distribution, whose algorithms vary between standard libraries, so
/// a given seed yields the same stream everywhere.
class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(seed) {}

    uint64_t next_u64() { return engine_(); }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller (one value per call, mate discarded).
    double gaussian() {
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    /// Uniform integer in [0, n). n must be > 0.
    size_t index(size_t n) {
        // Rejection-free modulo bias is negligible for the small n used here,
        // but keep it exact anyway.
        uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t v = engine_();
        while (v >= limit) v = engine_();
        return static_cast<size_t>(v % n);
    }

    /// Derive an independent child stream; used to give each purpose
    /// (shuffling, window choice, augmentation) its own seed.
    Rng fork() { return Rng(engine_() ^ 0x9e3779b97f4a7c15ULL); }

    uint64_t fork_seed() { return engine_() ^ 0x9e3779b97f4a7c15ULL; }

    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (size_t i = items.size(); i > 1; --i) {
            size_t j = index(i);
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::mt19937_64 engine_;
};

} // namespace auscsed
