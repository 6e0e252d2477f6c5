#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace bner {

// Deterministic RNG. mt19937_64 is bit-exact by the standard; all mappings to
// doubles/integers are spelled out here instead of using std::*_distribution,
// whose outputs differ between standard library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t u64() { return engine_(); }

    // Uniform in [0, 1) with 53-bit resolution.
    double unit() { return static_cast<double>(u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }

    // Uniform in {0, ..., n-1}, rejection-sampled to avoid modulo bias.
    std::uint64_t below(std::uint64_t n) {
        if (n <= 1) return 0;
        std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
        std::uint64_t x;
        do {
            x = u64();
        } while (x >= limit);
        return x % n;
    }

    // Box-Muller; unit() is shifted away from 0 so log() stays finite.
    double gaussian() {
        double u1 = (static_cast<double>(u64() >> 11) + 1.0) * 0x1.0p-53;
        double u2 = unit();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // Derive an independent stream from (seed, stream ids); splitmix64 mixing.
    static std::uint64_t derive(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
        std::uint64_t x = seed + 0x9e3779b97f4a7c15ULL * (a + 1) + 0xbf58476d1ce4e5b9ULL * (b + 1);
        x ^= x >> 30;
        x *= 0xbf58476d1ce4e5b9ULL;
        x ^= x >> 27;
        x *= 0x94d049bb133111ebULL;
        x ^= x >> 31;
        return x;
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace bner
