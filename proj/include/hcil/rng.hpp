#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <utility>

namespace hcil {

// Seeded generator with platform-stable derived distributions.
//
// std::uniform_int_distribution, std::normal_distribution and std::shuffle
// are implementation-defined, so the same seed would give different streams
// on different standard libraries. Only the raw mt19937_64 output is fixed by
// the standard; everything here is derived from it directly.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    // Uniform integer in [0, bound). bound must be > 0.
    std::uint64_t uniform_index(std::uint64_t bound);

    // Uniform double in [0, 1).
    double uniform01();

    // Standard normal deviate (Box-Muller, no cached second value).
    double normal();

    template <typename T>
    void shuffle(std::span<T> items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(uniform_index(i));
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::mt19937_64 engine_;
};

// SplitMix64 finalizer; used to derive independent sub-seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);

}  // namespace hcil
