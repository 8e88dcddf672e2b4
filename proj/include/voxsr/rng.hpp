#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace voxsr {

/// Deterministic random source. All distributions are implemented by hand on
/// top of the mt19937_64 bit stream so that a given seed yields the same
/// sequence on every platform and standard library (std::uniform_*_distribution
/// and std::shuffle are implementation-defined).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t bits() { return gen_(); }

    /// Uniform double in [0, 1), 53 random mantissa bits.
    double uniform01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    /// Uniform double in [a, b). Degenerate interval a == b returns a.
    double uniform(double a, double b) { return a + (b - a) * uniform01(); }

    /// Uniform integer in [0, n), unbiased. n must be > 0.
    std::uint64_t below(std::uint64_t n) {
        // rejection sampling on the top of the range
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = gen_();
        } while (x >= limit);
        return x % n;
    }

    /// Fisher-Yates shuffle with a fixed traversal order.
    template <class T>
    void shuffle(std::vector<T>& xs) {
        if (xs.size() < 2) return;
        for (std::size_t i = xs.size() - 1; i > 0; --i) {
            const std::size_t j = static_cast<std::size_t>(below(i + 1));
            std::swap(xs[i], xs[j]);
        }
    }

    /// k distinct indices out of [0, n), in draw order (partial Fisher-Yates).
    std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k) {
        std::vector<std::size_t> pool(n);
        for (std::size_t i = 0; i < n; ++i) pool[i] = i;
        std::vector<std::size_t> out(k);
        for (std::size_t i = 0; i < k; ++i) {
            const std::size_t j = i + static_cast<std::size_t>(below(n - i));
            std::swap(pool[i], pool[j]);
            out[i] = pool[i];
        }
        return out;
    }

private:
    std::mt19937_64 gen_;
};

} // namespace voxsr
