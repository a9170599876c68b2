#pragma once

#include <cmath>
#include <cstdint>

#include "avdt/tensor.hpp"

namespace avdt {

// Counter-based generator: output i is a pure mix of (seed, i), so streams are
// identical on every platform and can be resumed from (seed, counter) alone.
class SeededRng {
  public:
    explicit SeededRng(std::uint64_t seed, std::uint64_t counter = 0)
        : seed_(seed), counter_(counter) {}

    std::uint64_t seed() const { return seed_; }
    std::uint64_t counter() const { return counter_; }

    std::uint64_t next_u64() { return mix(seed_, counter_++); }

    // Uniform in [0,1) with 53 random bits.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform in [lo, hi).
    double next_uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }

    // Box-Muller; consumes two uniforms per pair, second value cached.
    double next_normal() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        double u1 = next_double();
        double u2 = next_double();
        while (u1 <= 0.0) u1 = next_double();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 6.283185307179586476925286766559 * u2;
        cached_ = r * std::sin(theta);
        have_cached_ = true;
        return r * std::cos(theta);
    }

    template <typename T>
    void fill_uniform(Tensor<T>& t, double lo, double hi) {
        for (std::size_t i = 0; i < t.numel(); ++i)
            t[i] = static_cast<T>(next_uniform(lo, hi));
    }

    template <typename T>
    void fill_normal(Tensor<T>& t, double mean = 0.0, double stddev = 1.0) {
        for (std::size_t i = 0; i < t.numel(); ++i)
            t[i] = static_cast<T>(mean + stddev * next_normal());
    }

    // Independent stream for a sub-task; distinct tags give distinct streams.
    SeededRng fork(std::uint64_t tag) const { return SeededRng(mix(seed_, 0xF0F0F0F0ULL ^ tag)); }

  private:
    static std::uint64_t mix(std::uint64_t seed, std::uint64_t counter) {
        std::uint64_t z = seed + (counter + 1) * 0x9E3779B97F4A7C15ULL;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    std::uint64_t seed_ = 0;
    std::uint64_t counter_ = 0;
    bool have_cached_ = false;
    double cached_ = 0.0;
};

} // namespace avdt
