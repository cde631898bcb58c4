#pragma once

#include <cstdint>
#include <random>

namespace seqvimp {

// Stream tags keep the independent random streams of one run from colliding
// when they are all derived from the same master seed.
namespace stream {
inline constexpr std::uint64_t kForest = 0x666f726573740001ull;
inline constexpr std::uint64_t kPermute = 0x7065726d75740002ull;
inline constexpr std::uint64_t kRefit = 0x7265666974000003ull;
inline constexpr std::uint64_t kData = 0x6461746100000004ull;
inline constexpr std::uint64_t kExperiment = 0x6578706572690005ull;
}  // namespace stream

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Deterministic sub-seed for (stream, a, b) under a master seed.  Every
// consumer that needs its own RNG derives one of these instead of sharing a
// generator, so results do not depend on evaluation order or thread count.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream_tag,
                                 std::uint64_t a = 0, std::uint64_t b = 0) {
    std::uint64_t s = splitmix64(master ^ stream_tag);
    s = splitmix64(s ^ a);
    s = splitmix64(s ^ b);
    return s;
}

inline std::mt19937_64 make_rng(std::uint64_t seed) {
    return std::mt19937_64(seed);
}

}  // namespace seqvimp
