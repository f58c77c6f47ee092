#include "subslot/rng.hpp"

namespace subslot {

std::uint64_t mix64(std::uint64_t x) noexcept {
    x ^= x >> 30;
    x *= 0xBF58476D1CE4E5B9ULL;
    x ^= x >> 27;
    x *= 0x94D049BB133111EBULL;
    x ^= x >> 31;
    return x;
}

std::uint64_t stream_key(std::uint64_t seed, Stream stream, std::uint64_t a, std::uint64_t b,
                         std::uint64_t c, std::uint64_t d) noexcept {
    std::uint64_t h = mix64(seed + 0x9E3779B97F4A7C15ULL);
    for (std::uint64_t v : {static_cast<std::uint64_t>(stream), a, b, c, d}) {
        h = mix64(h ^ (v + 0x9E3779B97F4A7C15ULL + (h << 6) + (h >> 2)));
    }
    return h;
}

}  // namespace subslot
