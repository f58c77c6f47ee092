#pragma once

#include <cstdint>
#include <limits>
#include <random>

namespace subslot {

// Labelled substreams derived from the master seed. Every consumer of
// randomness draws from its own label so that switching a component off
// never shifts the draws seen by another one.
enum class Stream : std::uint64_t {
    cex_path = 1,
    dex_reference = 2,
    noise_count = 3,
    noise_impact = 4,
    noise_placement = 5,
    arb_landing = 6,
    retry_landing = 7,
    belief_mc = 8,
    synthetic_swaps = 9,
};

std::uint64_t mix64(std::uint64_t x) noexcept;

// Stateless key derivation: the same (seed, stream, counters...) always maps
// to the same 64-bit key regardless of call order or thread.
std::uint64_t stream_key(std::uint64_t seed, Stream stream, std::uint64_t a = 0,
                         std::uint64_t b = 0, std::uint64_t c = 0,
                         std::uint64_t d = 0) noexcept;

/// SplitMix64 generator. Cheap to construct, so one is created per counter
/// tuple (per path, per block, per execution point).
class CounterRng {
public:
    using result_type = std::uint64_t;

    explicit CounterRng(std::uint64_t key) noexcept : state_(key) {}
    CounterRng(std::uint64_t seed, Stream stream, std::uint64_t a = 0, std::uint64_t b = 0,
               std::uint64_t c = 0, std::uint64_t d = 0) noexcept
        : state_(stream_key(seed, stream, a, b, c, d)) {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept {
        state_ += 0x9E3779B97F4A7C15ULL;
        return mix64(state_);
    }

    // Uniform in [0, 1) with 53 bits of resolution.
    double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

    double normal() {
        std::normal_distribution<double> dist(0.0, 1.0);
        return dist(*this);
    }

    bool bernoulli(double p) noexcept { return uniform() < p; }

private:
    std::uint64_t state_;
};

}  // namespace subslot
