#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "vidtune/frame.hpp"

namespace vidtune {

/// splitmix64 mix step; used to derive independent child seeds from a master
/// seed so every pipeline stage owns its own stream.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag) {
    std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (tag + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// 64-bit FNV-1a, used to turn prompt strings into embedding seeds.
inline std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Seeded generator with a fully specified output sequence: mt19937_64 for
/// bits, (x >> 11) * 2^-53 uniforms, Box-Muller gaussians. mt19937_64 is
/// bit-exact across platforms, so the same seed gives the same stream
/// everywhere (std::normal_distribution would not).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Standard normal via Box-Muller; second variate of each pair is cached.
    double gaussian() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        // u1 in (0, 1] so log() is finite
        double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 2.0 * M_PI * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    /// Uniform integer in [lo, hi], inclusive, by rejection (no modulo bias).
    int uniform_int(int lo, int hi) {
        if (lo > hi) throw std::invalid_argument("Rng::uniform_int: empty range");
        std::uint64_t range = static_cast<std::uint64_t>(hi) - lo + 1;
        std::uint64_t threshold = (-range) % range;
        for (;;) {
            std::uint64_t x = next_u64();
            if (x >= threshold) return lo + static_cast<int>(x % range);
        }
    }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

inline LatentFrame gaussian_frame(Rng& rng, int height, int width, int channels) {
    LatentFrame f(height, width, channels);
    for (std::size_t i = 0; i < f.size(); ++i)
        f[i] = rng.gaussian();
    return f;
}

}  // namespace vidtune
