#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace gcnlab {

// splitmix64 finalizer. Good enough statistically for sampling work and,
// unlike std::mt19937 + libstdc++ distributions, bit-stable across platforms.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Named sub-stream tags so independent consumers of one experiment seed
// never share a stream.
namespace stream {
inline constexpr std::uint64_t init      = 0x696e6974ULL; // model init
inline constexpr std::uint64_t sbm       = 0x73626dULL;
inline constexpr std::uint64_t sampler   = 0x736d706cULL;
inline constexpr std::uint64_t dropout   = 0x64726f70ULL;
inline constexpr std::uint64_t flag      = 0x666c6167ULL;
inline constexpr std::uint64_t label_use = 0x6c626c75ULL;
inline constexpr std::uint64_t walk      = 0x77616c6bULL;
inline constexpr std::uint64_t skipgram  = 0x73676e73ULL;
inline constexpr std::uint64_t split     = 0x73706c74ULL;
} // namespace stream

// Deterministic counter-based generator. Streams derived from the same
// (seed, tag, a, b) tuple are identical; distinct tuples are independent.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(mix64(seed)) {}

    static Rng derive(std::uint64_t seed, std::uint64_t tag,
                      std::uint64_t a = 0, std::uint64_t b = 0) {
        std::uint64_t h = mix64(seed);
        h = mix64(h ^ tag);
        h = mix64(h ^ a);
        h = mix64(h ^ b);
        Rng r(0);
        r.state_ = h;
        return r;
    }

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1), 53 bits of precision.
    double uniform01() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform01();
    }

    // Uniform integer in [0, n). Lemire multiply-shift; the O(n/2^64) bias
    // is far below anything our statistical tests can see.
    std::uint64_t uniform_int(std::uint64_t n) {
        unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * n;
        return static_cast<std::uint64_t>(m >> 64);
    }

    // Standard normal via Box-Muller, one spare cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform01();
        double u2 = uniform01();
        while (u1 <= 0.0) u1 = uniform01();
        double r = std::sqrt(-2.0 * std::log(u1));
        double t = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(t);
        has_spare_ = true;
        return r * std::cos(t);
    }

    // Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_int(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace gcnlab
