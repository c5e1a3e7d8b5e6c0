#pragma once

#include <cstdint>
#include <initializer_list>
#include <vector>

namespace geoflow {

// SplitMix64 finalizer; the bijective mixing step of the counter-based generator.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept
{
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30U)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27U)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31U);
}

// Derive an independent stream key from a parent seed and a list of indices
// (sample index, epoch, purpose tag, ...). Pure function of its arguments.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> path) noexcept
{
    std::uint64_t key = mix64(seed);
    for (const auto index : path) {
        key = mix64(key ^ mix64(index + 0x632BE59BD9B4E019ULL));
    }
    return key;
}

// Counter-based generator "splitmix64-ctr": output k is mix64(key + k * golden).
// Normals use Box-Muller on consecutive uniforms, caching the sine branch.
class CounterRng {
public:
    explicit CounterRng(std::uint64_t key) noexcept : key_(key) {}

    std::uint64_t next_u64() noexcept
    {
        const std::uint64_t out = mix64(key_ + counter_ * 0x9E3779B97F4A7C15ULL);
        ++counter_;
        return out;
    }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() noexcept { return static_cast<double>(next_u64() >> 11U) * 0x1.0p-53; }

    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    double normal() noexcept;

    // Uniform integer in [0, n) by rejection; n > 0.
    std::uint64_t below(std::uint64_t n) noexcept;

    // Fisher-Yates permutation of 0..n-1.
    std::vector<std::size_t> permutation(std::size_t n);

    [[nodiscard]] std::uint64_t key() const noexcept { return key_; }
    [[nodiscard]] std::uint64_t counter() const noexcept { return counter_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace geoflow
