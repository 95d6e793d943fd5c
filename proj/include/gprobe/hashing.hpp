#pragma once
// Stable 64-bit hashing for cache keys, guideline ids, and seed derivation.
// FNV-1a is used for content digests; splitmix64 for turning digests into
// well-mixed RNG seeds. Both are fixed algorithms so hashes are portable
// across platforms and runs.

#include <cstdint>
#include <string>
#include <string_view>

namespace gprobe {

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

constexpr std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = kFnvOffset) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= kFnvPrime;
    }
    return h;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::string to_hex64(std::uint64_t value);

// Deterministic per-purpose seed stream derived from a user seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose, std::uint64_t index = 0) {
    return splitmix64(seed ^ fnv1a64(purpose) ^ (index * 0x9e3779b97f4a7c15ULL));
}

}  // namespace gprobe
